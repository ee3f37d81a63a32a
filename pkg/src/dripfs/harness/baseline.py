"""Comparison arm: a plain per-file encrypted store, in the style of a
stacked encrypting filesystem. Every frontend write immediately rewrites one
backend file whose size follows the plaintext, so timing and volume leak."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .. import codec
from ..backend import TraceEvent


@dataclass
class BaselineStore:
    key: bytes
    files: dict = field(default_factory=dict)
    plain: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)
    _slots: dict = field(default_factory=dict)

    def _slot(self, path: str) -> int:
        if path not in self._slots:
            self._slots[path] = len(self._slots)
        return self._slots[path]

    def _store(self, path: str, now: float) -> None:
        name = hashlib.sha256(path.encode()).digest()[:8]
        raw = codec.seal(self.plain[path], self.key, name).to_bytes()
        self.files[path] = raw
        self.trace.append(TraceEvent(len(self.trace), now, now, (self._slot(path),), len(raw)))

    def write(self, path: str, offset: int, data: bytes, now: float) -> None:
        old = self.plain.get(path, b"")
        if offset > len(old):
            old += bytes(offset - len(old))
        self.plain[path] = old[:offset] + data + old[offset + len(data):]
        self._store(path, now)

    def put(self, path: str, data: bytes, now: float) -> None:
        self.plain[path] = bytes(data)
        self._store(path, now)

    def delete(self, path: str, now: float) -> None:
        self.plain.pop(path, None)
        self.files.pop(path, None)
        self.trace.append(TraceEvent(len(self.trace), now, now, (self._slot(path),), 0))

    def read(self, path: str) -> bytes:
        name = hashlib.sha256(path.encode()).digest()[:8]
        return codec.unseal(self.files[path], self.key, name)


def baseline_store(ops, key: bytes, cap: int = 1) -> BaselineStore:
    """Replay workload ``Op`` records against the baseline."""
    store = BaselineStore(key)
    for op in ops:
        if op.kind == "write":
            store.write(op.path, op.offset * cap, bytes([op.fill]) * op.length, op.time)
        elif op.kind == "create":
            store.put(op.path, b"", op.time)
        elif op.kind == "delete":
            store.delete(op.path, op.time)
        elif op.kind == "resize":
            data = store.plain.get(op.path, b"")
            store.put(op.path, data[:op.length] + bytes(max(0, op.length - len(data))), op.time)
    return store
