"""Store a few files, let the writer drip them out, read them back from a
second, read-only mount and look at what an observer of the backend saw.

    python demos/quickstart.py
"""

from dripfs import ROClient, RWClient, SyncConfig, VirtualClock, init_backend, run_scheduler
from dripfs.harness.audit import audit_trace

store = init_backend(None, N=64, B=16384, key=b"\x42" * 32, k=3, t=10.0)
rw = RWClient(store, SyncConfig(k=3, t=10.0, seed=1))
clock = VirtualClock()

rw.mkdir("/notes")
rw.put("/notes/todo.txt", b"buy milk\n" * 40)
rw.put("/photo.raw", bytes(range(256)) * 200)
print("buffered bytes before any tick:", rw.buffer.nbytes)

reports = run_scheduler(rw, clock, until_idle=True)
print(f"published after {len(reports)} ticks; buffer now {rw.buffer.nbytes} bytes")

ro = ROClient(store.reader())
print("reader sees:", ro.walk())
assert ro.read("/notes/todo.txt") == rw.read("/notes/todo.txt")

# keep ticking with nothing to do: the backend keeps changing the same way
run_scheduler(rw, clock, 200)
for ev in store.trace[:3]:
    print("epoch", ev.epoch_index, "t =", ev.virtual_time_s, "files", ev.written_indices, ev.total_bytes, "bytes")
print(audit_trace(store.trace, 64, 3, 10.0).summary())
