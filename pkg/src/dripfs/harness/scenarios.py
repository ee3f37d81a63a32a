"""Scripted sync scenarios with hand-picked pairs."""

from __future__ import annotations

from dataclasses import dataclass

from ..backend import init_backend
from ..codec import FullBlock, SplitBlock
from ..roclient import ROClient
from ..rwclient import RWClient, SyncConfig


class ScriptedSelector:
    """Returns queued pair lists in order, one per sync."""

    def __init__(self):
        self.queue: list = []

    def __call__(self, rng, N, k):
        return list(self.queue.pop(0))


@dataclass
class ViewRow:
    action: str
    buffer: frozenset
    backend: frozenset
    rw: tuple
    ro: tuple

    def cells(self) -> tuple:
        fmt = lambda xs: ",".join(xs)
        return (self.action, "{" + fmt(sorted(self.buffer)) + "}", "{" + fmt(sorted(self.backend)) + "}",
                "[" + fmt(self.rw) + "]", "[" + fmt(self.ro) + "]")


def shadow_example(key: bytes = b"\x05" * 32) -> list:
    """Update the last two of three fragments of one file and follow the
    buffer, the backend and both clients' views through the syncs that
    publish the change and clear the old copies.

    Fragment versions are labelled f1, f2, f3 and f2', f3'.
    """
    sel = ScriptedSelector()
    store = init_backend(None, 8, 4096, key, k=2, t=10.0)
    rw = RWClient(store, SyncConfig(2, 10.0, seed=0), selector=sel)
    cap = rw.layout.data_capacity
    labels = {b"A": "f1", b"B": "f2", b"C": "f3", b"b": "f2'", b"c": "f3'"}
    now = [0.0]

    def sync(pairs):
        sel.queue.append(pairs)
        now[0] += 10.0
        rw.sync_epoch(now[0])
        rw.flush(now[0])

    fid = rw.put("/f", b"A" * cap + b"B" * cap + b"C" * 100)
    sync([1, 2])  # pair 1: [split(root, f3), f1]; pair 2: [f2, empty]
    rw.put("/g", b"g" * 100)
    rw.put("/h", b"h" * cap)
    sync([3, 4])  # pair 3: [split(root, g), h]

    ro = ROClient(store.reader())

    def lab(data: bytes) -> str:
        return labels[data[:1]]

    def row(action):
        buf = frozenset(lab(fr.data) for fr in rw.buffer if fr.file_id == fid)
        backend = set()
        for p in range(1, store.N):
            for block in store.read_pair(p):
                if isinstance(block, FullBlock) and block.file_id == fid:
                    backend.add(lab(block.payload))
                elif isinstance(block, SplitBlock) and block.find(fid) is not None:
                    backend.add(lab(block.find(fid)))
        data_rw = rw.read("/f")
        ro.refresh()
        data_ro = ro.read("/f")
        split = lambda d: tuple(lab(d[i:i + 1]) for i in range(0, len(d), cap))
        return ViewRow(action, buf, frozenset(backend), split(data_rw), split(data_ro))

    rows = [row("0. (initial)")]
    rw.write("/f", cap, b"b" * cap + b"c" * 100)
    rows.append(row("1. Two blocks updated"))
    sync([1, 3])  # no empty block anywhere; f3' joins the split block in pair 3
    rows.append(row("2. One block synced"))
    sync([2, 4])  # f2' takes the free block of pair 2, the file is published
    rows.append(row("3. Both blocks synced"))
    sync([1, 2])  # the old f2 and f3 are now stale and get dropped
    rows.append(row("4. Stale data removed"))
    rw.close()
    return rows


SHADOW_TABLE = [
    ("0. (initial)", "{}", "{f1,f2,f3}", "[f1,f2,f3]", "[f1,f2,f3]"),
    ("1. Two blocks updated", "{f2',f3'}", "{f1,f2,f3}", "[f1,f2',f3']", "[f1,f2,f3]"),
    ("2. One block synced", "{f2'}", "{f1,f2,f3,f3'}", "[f1,f2',f3']", "[f1,f2,f3]"),
    ("3. Both blocks synced", "{}", "{f1,f2,f2',f3,f3'}", "[f1,f2',f3']", "[f1,f2',f3']"),
    ("4. Stale data removed", "{}", "{f1,f2',f3'}", "[f1,f2',f3']", "[f1,f2',f3']"),
]
