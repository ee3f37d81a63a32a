import random

import numpy as np
import pytest

from dripfs.backend import TraceEvent
from dripfs.errors import MalformedTrace
from dripfs.harness import audit
from dripfs.harness.baseline import baseline_store
from dripfs.harness.faults import STAGES, crash_trial
from dripfs.harness.propagation import PropagationSim
from dripfs.harness.sim import run_visibility_sim
from dripfs.harness.theorem import mixed_sizes, validate_theorem1
from dripfs.harness.workloads import (Op, example_fsequences, fill_bytes, lognormal_sizes, prefill,
                                      random_fsequence, run_script)
from dripfs.roclient import ROClient
from dripfs.rwclient import run_scheduler

from conftest import KEY, mount


def test_delay_zero_replica_is_identical():
    store, rw, clock = mount()
    sim = PropagationSim(store)
    rep = sim.add_replica(0.0)
    rw.put("/a", b"a" * 3000)
    for _ in range(6):
        run_scheduler(rw, clock, 1)
        sim.propagate(clock.now())
        assert rep.files == store.files


def test_two_replicas_converge():
    store, rw, clock = mount()
    sim = PropagationSim(store, seed=3)
    r1 = sim.add_replica(2.0)
    r2 = sim.add_replica((0.0, 25.0))
    rw.put("/a", b"a" * 3000)
    run_scheduler(rw, clock, 8)
    sim.propagate(clock.now() + 100)
    assert sim.pending() == 0
    assert r1.files == r2.files == store.files


def test_replica_superblock_never_ahead_of_data():
    store, rw, clock = mount(seed=4)
    sim = PropagationSim(store, seed=4)
    rep = sim.add_replica((0.0, 30.0))
    ro = ROClient(rep)
    paths = []
    for i in range(15):
        p = f"/p{i}"
        rw.put(p, bytes([i + 1]) * (500 * i + 1))
        paths.append(p)
        run_scheduler(rw, clock, 2)
        for step in range(4):
            sim.propagate(clock.now() - 10 + step * 2.5)
            ro.refresh()
            for name in ro.walk():
                try:
                    data = ro.read(name)
                except Exception as exc:  # dangling names are fine, torn data is not
                    assert type(exc).__name__ == "Unavailable"
                    continue
                i = int(name[2:])
                assert data == bytes([i + 1]) * (500 * i + 1)


def test_visibility_lag_matches_delay():
    res = run_visibility_sim(N=32, B=8192, delay=5.0, files=6, size=9000, gap_epochs=3)
    assert len(res.rows) == 6
    assert all(abs(r.lag - 5.0) <= 10.0 for r in res.rows)
    assert all(r.rw_visible >= r.inserted for r in res.rows)


def _idle_trace(n, N=16, k=3, seed=1):
    store, rw, clock = mount(N=N, k=k, seed=seed)
    run_scheduler(rw, clock, n)
    return store.trace


def test_idle_trace_passes_audit():
    rep = audit.audit_trace(_idle_trace(1000), 16, 3, 10.0)
    assert rep.passed(0.01), rep.summary()


def test_doctored_trace_fails_volume():
    evs = list(_idle_trace(200))
    ev = evs[50]
    evs[50] = TraceEvent(ev.epoch_index, ev.virtual_time_s, ev.wall_time_s, tuple(range(7)), ev.total_bytes)
    rep = audit.audit_trace(evs, 16, 3, 10.0)
    assert not rep.volume_ok and not rep.passed()


def test_audit_detects_cadence_and_superblock():
    evs = list(_idle_trace(200))
    ev = evs[10]
    evs[10] = TraceEvent(ev.epoch_index, ev.virtual_time_s + 1, ev.wall_time_s, ev.written_indices, ev.total_bytes)
    assert not audit.audit_trace(evs, 16, 3, 10.0).cadence_ok
    evs = list(_idle_trace(200))
    ev = evs[0]
    evs[0] = TraceEvent(ev.epoch_index, ev.virtual_time_s, ev.wall_time_s, (1, 2, 3, 4), ev.total_bytes)
    assert not audit.audit_trace(evs, 16, 3, 10.0).superblock_ok


def test_audit_rejects_short_or_bad_traces(tmp_path):
    with pytest.raises(MalformedTrace):
        audit.audit_trace(_idle_trace(5), 16, 3, 10.0)
    evs = _idle_trace(120)
    bad = evs[:-1] + [TraceEvent(0, 0.0, 0.0, (0, 99), 1)]
    with pytest.raises(MalformedTrace):
        audit.audit_trace(bad, 16, 3, 10.0)


def test_skewed_indices_fail_uniformity():
    evs = [TraceEvent(i, 10.0 * i, 10.0 * i, (0, 1, 2, 3), 100) for i in range(300)]
    assert audit.audit_trace(evs, 16, 3, 10.0).uniformity_p < 1e-6


def test_example_fsequences_same_shape():
    traces = []
    for script in example_fsequences():
        store, rw, clock = mount(N=32, B=4096, k=3, t=5.0, seed=None)
        rw.put("/file1", b"1" * 20000)
        rw.put("/file2", b"2" * 20000)
        run_scheduler(rw, clock, until_idle=True)
        clock.advance(5.0)
        start = len(store.trace)
        run_script(rw, clock, script, 150)
        traces.append(audit.rebase(store.trace[start:]))
    shapes = {tuple(audit.shape(t)) for t in traces}
    assert len(shapes) == 1
    for t in traces:
        assert audit.audit_trace(t, 32, 3, 5.0).passed(0.001)
    assert audit.two_sample_pvalue(traces[1], traces[2], 32) > 0.001


def test_baseline_fails_audit():
    rng = random.Random(2)
    ops = random_fsequence(rng, 5000, 50.0).ops
    ops += [Op(60.0 + i * 3.7, "write", f"/b{i % 3}", 0, 10 + i * 31, i % 200) for i in range(150)]
    store = baseline_store(ops, KEY)
    assert store.read("/b1")
    rep = audit.audit_trace(store.trace, 16, 3, 10.0)
    assert not rep.passed()
    assert not rep.cadence_ok and not rep.volume_ok and not rep.bytes_ok


def test_random_fsequence_budget():
    rng = random.Random(0)
    for _ in range(50):
        s = random_fsequence(rng, 30, 5.0)
        assert s.L <= 30 and s.last_time <= 5.0


def test_lognormal_sizes_sum_exactly():
    sizes = lognormal_sizes(np.random.default_rng(0), 1_000_000, outlier=100_000, max_size=50_000)
    assert sum(sizes) == 1_000_000 and sizes[0] == 100_000
    assert max(sizes[1:]) <= 50_000


def test_prefill_reaches_target_and_restores_client():
    store, rw, clock = mount(N=32, B=4096, k=3, seed=1)
    sel, cfg = rw.selector, rw.config
    target = fill_bytes(rw.layout, 32, 0.5)
    paths = prefill(rw, clock, mixed_sizes(random.Random(1), target, rw.layout.data_capacity))
    assert rw.selector is sel and rw.config is cfg and rw.idle
    assert sum(rw.stat(p).size for p in paths) == target


def test_theorem1_small_run():
    res = validate_theorem1(4096, 64, 3, 0.25, 40, layouts=4, seed=2)
    assert res.in_bound_regime
    assert res.mean_syncs <= res.bound
    assert res.tail_rates[1] <= np.exp(-1)


@pytest.mark.parametrize("stage", STAGES)
def test_crash_each_stage(stage):
    for seed in range(6):
        out = crash_trial(seed, stage=stage)
        assert out.ok, out.problems
