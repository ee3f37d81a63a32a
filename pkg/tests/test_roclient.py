import random

import pytest

from dripfs.clock import VirtualClock
from dripfs.errors import IsADirectory, NotFound, TableFull, Unavailable
from dripfs.harness.scenarios import shadow_example
from dripfs.roclient import ROClient, Watcher, watch
from dripfs.rwclient import run_scheduler

from conftest import mount


def test_synced_file_matches_writer(small):
    store, rw, clock = small
    payloads = {f"/f{i}": bytes([i + 1]) * (700 * i + 3) for i in range(8)}
    for p, d in payloads.items():
        rw.put(p, d)
    run_scheduler(rw, clock, until_idle=True)
    ro = ROClient(store.reader())
    for p, d in payloads.items():
        assert ro.read(p) == d == rw.read(p)
    assert ro.read("/f3", 100, 50) == payloads["/f3"][100:150]
    assert ro.walk() == sorted(payloads)
    with pytest.raises(IsADirectory):
        ro.read("/")
    with pytest.raises(NotFound):
        ro.read("/nope")


def test_mid_shadow_reader_sees_old_version():
    rows = shadow_example()
    assert rows[2].ro == ("f1", "f2", "f3")
    assert rows[2].rw == ("f1", "f2'", "f3'")


def test_reader_never_writes(small):
    store, rw, clock = small
    rw.put("/a", b"a" * 5000)
    run_scheduler(rw, clock, until_idle=True)
    view = store.reader()
    ro = ROClient(view)
    ro.read("/a")
    with pytest.raises(PermissionError):
        view.stage(1, bytes(store.B))
    assert view.trace == []


def test_at_most_three_reads_per_fragment():
    store, rw, clock = mount(N=64, B=4096, k=4, seed=9)
    rng = random.Random(9)
    for i in range(rw.table.cache_capacity + 40):
        while True:
            try:
                rw.put(f"/r{i}", b"r" * rng.randrange(1, 6000))
                break
            except TableFull:
                run_scheduler(rw, clock, 3)
    run_scheduler(rw, clock, until_idle=True)
    assert rw.table.root  # some entries only live in leaf nodes
    ro = ROClient(store.reader())
    worst = 0
    for fid, entry in rw.working.items():
        for idx in range(len(entry.block_ids)):
            data, reads = ro.read_fragment(fid, idx)
            assert len(data) == rw.layout.fragment_length(entry.size, idx)
            worst = max(worst, reads)
    assert worst == 3


def test_ttl_caches_superblock(small):
    store, rw, clock = small
    rclock = VirtualClock()
    ro = ROClient(store.reader(), ttl=5.0, clock=rclock)
    rw.put("/a", b"x")
    run_scheduler(rw, clock, until_idle=True)
    with pytest.raises(NotFound):
        ro.read("/a")  # still the cached superblock
    rclock.advance(5.0)
    assert ro.read("/a") == b"x"


def test_watcher_reports_each_file_once(small):
    store, rw, clock = small
    ro = ROClient(store.reader(), ttl=0, clock=clock)
    w = Watcher(ro, ["/*.log"])
    rw.put("/a.log", b"1" * 3000)
    rw.put("/b.txt", b"2")
    seen = []
    for _ in range(30):
        run_scheduler(rw, clock, 1)
        seen += w.poll()
    assert [e.path for e in seen] == ["/a.log"]
    assert seen[0].size == 3000


def test_watch_generator_stops_at_until(small):
    store, rw, clock = small
    rw.put("/x", b"x")
    run_scheduler(rw, clock, until_idle=True)
    rclock = VirtualClock(clock.now())
    ro = ROClient(store.reader(), ttl=0, clock=rclock)
    events = list(watch(ro, ["/*"], rclock, interval=1.0, until=clock.now() + 3))
    assert [e.path for e in events] == ["/x"]
    assert rclock.now() > clock.now() + 3


def test_unallocated_fragment_is_unavailable(small):
    store, rw, clock = small
    cap = rw.layout.data_capacity
    rw.put("/h", b"h" * 10)
    run_scheduler(rw, clock, until_idle=True)
    rw.resize("/h", 3 * cap)
    run_scheduler(rw, clock, until_idle=True)
    ro = ROClient(store.reader())
    assert ro.read("/h", 0, 10) == b"h" * 10
    with pytest.raises(Unavailable):
        ro.read("/h")
