import pytest

from dripfs.harness.cli import main, read_config


@pytest.fixture
def env(tmp_path, monkeypatch):
    monkeypatch.setenv("DRIPFS_PASSPHRASE", "correct horse")
    monkeypatch.chdir(tmp_path)
    assert main(["init", "--backend", "store", "--N", "16", "--B", "4096", "--k", "3", "--t", "0.05",
                 "--seed", "1"]) == 0
    return tmp_path


def test_init_writes_config(env):
    cfg = read_config(env / "store.conf")
    assert cfg["N"] == "16" and cfg["B"] == "4096" and len(bytes.fromhex(cfg["salt"])) == 16
    assert len(list((env / "store").glob("*.blk"))) == 16


def test_put_get_ls_rm(env, capsys):
    (env / "a.txt").write_bytes(b"hello world" * 500)
    assert main(["put", "--backend", "store", "a.txt", "/docs/a.txt"]) == 0
    assert main(["get", "--backend", "store", "/docs/a.txt", "out.txt"]) == 0
    assert (env / "out.txt").read_bytes() == b"hello world" * 500
    capsys.readouterr()
    assert main(["ls", "--backend", "store", "/docs"]) == 0
    assert "a.txt" in capsys.readouterr().out
    assert main(["resize", "--backend", "store", "/docs/a.txt", "5"]) == 0
    assert main(["get", "--backend", "store", "/docs/a.txt", "out.txt"]) == 0
    assert (env / "out.txt").read_bytes() == b"hello"
    assert main(["rm", "--backend", "store", "/docs/a.txt"]) == 0
    assert main(["get", "--backend", "store", "/docs/a.txt", "out.txt"]) == 2
    assert "NOT_FOUND" in capsys.readouterr().err


def test_wrong_passphrase(env, monkeypatch, capsys):
    monkeypatch.setenv("DRIPFS_PASSPHRASE", "wrong")
    assert main(["ls", "--backend", "store"]) == 2
    assert "AUTH_FAIL" in capsys.readouterr().err


def test_trace_keeps_cadence_across_runs(env, monkeypatch, capsys):
    monkeypatch.setenv("DRIPFS_BACKEND", "store")
    (env / "a.txt").write_bytes(b"x" * 3000)
    for dest in ("/a", "/b", "/c"):
        assert main(["put", "a.txt", dest]) == 0
    (env / "inbox").mkdir()
    (env / "inbox" / "d").write_bytes(b"d" * 100)
    assert main(["daemon", "--inbox", "inbox", "--duration", "0.4"]) == 0
    assert not list((env / "inbox").iterdir())
    capsys.readouterr()
    main(["audit", "store.trace.csv", "--min-events", "5"])
    out = capsys.readouterr().out
    assert "cadence=ok volume=ok superblock=ok bytes=ok" in out
    assert main(["get", "/d", "-"]) == 0


def test_audit_needs_parameters(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("DRIPFS_BACKEND", raising=False)
    monkeypatch.chdir(tmp_path)
    (tmp_path / "t.csv").write_text("epoch_index,virtual_time_s,wall_time_s,written_indices,total_bytes\n")
    assert main(["audit", "t.csv"]) == 2
    assert main(["audit", "t.csv", "--N", "16", "--k", "3", "--t", "1"]) == 2  # too few events
    assert "MALFORMED_TRACE" in capsys.readouterr().err


def test_sim_command(tmp_path, capsys):
    assert main(["sim", "--N", "16", "--B", "8192", "--files", "3", "--out", str(tmp_path / "v.csv")]) == 0
    assert "lag" in capsys.readouterr().out
    assert len((tmp_path / "v.csv").read_text().splitlines()) == 4
