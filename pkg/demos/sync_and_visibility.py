"""A writer, a simulated sync service with a 5 second delay and a reader
on the far side. Compare when files show up locally and remotely, then
run the same writes through a plain per-file encrypted store and audit
both traces.
"""

from dripfs.harness.audit import audit_trace
from dripfs.harness.baseline import baseline_store
from dripfs.harness.sim import run_visibility_sim
from dripfs.harness.workloads import Op

res = run_visibility_sim(N=64, B=65536, k=3, t=10.0, delay=5.0, files=12, gap_epochs=3)
print(res.summary())
for r in res.rows[:5]:
    print(f"{r.path}: inserted {r.inserted:6.1f}s  local {r.rw_visible:6.1f}s  remote {r.ro_visible:6.1f}s")

ops = [Op(r.inserted, "write", r.path, 0, 40_000, 1) for r in res.rows]
ops += [Op(400.0 + 3.1 * i, "write", "/log", 0, 100 * (i + 1), 2) for i in range(120)]
plain = baseline_store(ops, b"\x42" * 32)
print("plain store:", audit_trace(plain.trace, 64, 3, 10.0).summary())
