"""The untrusted storage view: N equal-size encrypted files, written only in
whole-epoch batches, with a record of every batch as the network observer
would see it."""

from __future__ import annotations

import csv
import logging
import os
import struct
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import codec
from .errors import AuthFail, BadParams, Exists, Locked, NothingStaged, PartialFlush

log = logging.getLogger(__name__)

TRACE_FIELDS = ("epoch_index", "virtual_time_s", "wall_time_s", "written_indices", "total_bytes")
LOCK_NAME = "rw.lock"
SUFFIX = ".blk"


@dataclass(frozen=True)
class TraceEvent:
    epoch_index: int
    virtual_time_s: float
    wall_time_s: float
    written_indices: tuple
    total_bytes: int

    def row(self) -> list:
        return [self.epoch_index, repr(float(self.virtual_time_s)), repr(float(self.wall_time_s)),
                ";".join(str(i) for i in self.written_indices), self.total_bytes]


def write_trace_csv(path, events, append: bool = False) -> None:
    path = Path(path)
    new = not (append and path.exists() and path.stat().st_size > 0)
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(TRACE_FIELDS)
        for ev in events:
            w.writerow(ev.row())


def read_trace_csv(path) -> list:
    from .errors import MalformedTrace

    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header[:5]) != TRACE_FIELDS:
            raise MalformedTrace(f"{path}: missing trace header")
        for lineno, row in enumerate(reader, start=2):
            try:
                idx = tuple(int(x) for x in row[3].split(";")) if row[3] else ()
                out.append(TraceEvent(int(row[0]), float(row[1]), float(row[2]), idx, int(row[4])))
            except (ValueError, IndexError) as exc:
                raise MalformedTrace(f"{path}:{lineno}: {exc}") from None
    return out


def _aad(index: int) -> bytes:
    # binds a ciphertext to its slot so files cannot be swapped unnoticed
    return struct.pack(">I", index)


class BackendStore:
    """Base class; subclasses provide raw byte storage per index."""

    def __init__(self, N: int, B: int, key: bytes, *, readonly: bool = False):
        self.N = N
        self.B = B
        self.layout = codec.Layout(B)
        self.key = key
        self.readonly = readonly
        self.read_count = 0
        self.trace: list = []
        self.trace_path: Optional[Path] = None
        self.listeners: list = []
        self.dirty = False
        self._staged: dict = {}
        self._staged_plain: dict = {}

    # -- raw storage, overridden ------------------------------------------

    def _read_raw(self, index: int) -> bytes:
        raise NotImplementedError

    def _write_raw(self, index: int, data: bytes) -> None:
        raise NotImplementedError

    def exists(self) -> bool:
        raise NotImplementedError

    # -- reads ------------------------------------------------------------

    def read_raw(self, index: int) -> bytes:
        if not 0 <= index < self.N:
            raise IndexError(index)
        self.read_count += 1
        return self._read_raw(index)

    def decrypt(self, index: int, raw: bytes) -> bytes:
        return codec.unseal(raw, self.key, _aad(index))

    def read_plain(self, index: int) -> bytes:
        return self.decrypt(index, self.read_raw(index))

    def read_pair(self, index: int):
        """Decoded content of backend file ``index``: the Superblock for 0,
        otherwise a (left, right) block tuple."""
        plain = self.read_plain(index)
        if index == 0:
            return codec.decode_superblock(plain)
        return codec.decode_block_pair(plain)

    def read_superblock(self) -> codec.Superblock:
        return self.read_pair(0)

    # -- staged writes ----------------------------------------------------

    def stage(self, index: int, plaintext: bytes) -> None:
        if self.readonly:
            raise PermissionError("read-only backend")
        if len(plaintext) != self.B:
            raise BadParams(f"plaintext must be {self.B} bytes, got {len(plaintext)}")
        self._staged[index] = codec.seal(plaintext, self.key, _aad(index)).to_bytes()
        self._staged_plain[index] = plaintext

    def staged_plain(self, index: int) -> Optional[bytes]:
        return self._staged_plain.get(index)

    @property
    def has_staged(self) -> bool:
        return bool(self._staged)

    def discard_staged(self) -> None:
        self._staged.clear()
        self._staged_plain.clear()

    def flush(self, epoch: int, virtual_time: float, wall_time: Optional[float] = None,
              crash_after: Optional[int] = None) -> TraceEvent:
        """Write every staged file, data files first and the superblock last.

        ``crash_after`` simulates a process crash after that many files were
        replaced; the store is marked dirty and PartialFlush raised.
        """
        if not self._staged:
            raise NothingStaged("flush with nothing staged")
        order = sorted(i for i in self._staged if i != 0)
        if 0 in self._staged:
            order.append(0)
        written = {}
        for n, i in enumerate(order):
            if crash_after is not None and n >= crash_after:
                self.dirty = True
                self.discard_staged()
                raise PartialFlush(f"crash injected after {n} of {len(order)} files")
            self._write_raw(i, self._staged[i])
            written[i] = self._staged[i]
        self.discard_staged()
        wall = time.time() if wall_time is None else wall_time
        ev = TraceEvent(epoch, virtual_time, wall, tuple(sorted(written)),
                        sum(len(v) for v in written.values()))
        self.trace.append(ev)
        if self.trace_path is not None:
            write_trace_csv(self.trace_path, [ev], append=True)
        for fn in self.listeners:
            fn(ev, written)
        return ev

    def install(self, index: int, raw: bytes) -> None:
        """Replace a file with already-encrypted bytes (replication)."""
        self._write_raw(index, raw)

    # -- lock -------------------------------------------------------------

    def acquire_lock(self, force: bool = False) -> None:
        pass

    def release_lock(self) -> None:
        pass


class MemoryBackend(BackendStore):
    def __init__(self, N, B, key, *, readonly=False, files=None):
        super().__init__(N, B, key, readonly=readonly)
        self.files: dict = {} if files is None else files
        self._locked = False

    def _read_raw(self, index):
        return self.files[index]

    def _write_raw(self, index, data):
        self.files[index] = data

    def exists(self):
        return bool(self.files)

    def reader(self) -> "MemoryBackend":
        """A read-only view sharing the same files (a second client on the
        same machine)."""
        return MemoryBackend(self.N, self.B, self.key, readonly=True, files=self.files)

    def clone(self, readonly: bool = True) -> "MemoryBackend":
        return MemoryBackend(self.N, self.B, self.key, readonly=readonly, files=dict(self.files))

    def acquire_lock(self, force=False):
        if self._locked and not force:
            raise Locked("backend already mounted read/write")
        self._locked = True

    def release_lock(self):
        self._locked = False


def file_name(index: int) -> str:
    return f"{index:08d}{SUFFIX}"


class DirectoryBackend(BackendStore):
    def __init__(self, path, N, B, key, *, readonly=False, durable=False):
        super().__init__(N, B, key, readonly=readonly)
        self.path = Path(path)
        self.durable = durable
        self._lock_fd = None

    def _file(self, index):
        return self.path / file_name(index)

    def _read_raw(self, index):
        try:
            return self._file(index).read_bytes()
        except FileNotFoundError:
            # a concurrent rename may briefly hide the file; retry once
            return self._file(index).read_bytes()

    def _write_raw(self, index, data):
        target = self._file(index)
        tmp = target.with_name(f".{target.name}.tmp")
        with open(tmp, "wb") as fh:
            fh.write(data)
            if self.durable:
                fh.flush()
                os.fsync(fh.fileno())
        os.replace(tmp, target)

    def exists(self):
        return self.path.is_dir() and any(self.path.glob("*" + SUFFIX))

    def acquire_lock(self, force=False):
        lock = self.path / LOCK_NAME
        if force and lock.exists():
            log.warning("breaking stale lock %s", lock)
            lock.unlink()
        try:
            self._lock_fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY, 0o644)
        except FileExistsError:
            raise Locked(f"{lock} exists: another read/write client is mounted") from None
        os.write(self._lock_fd, f"{os.getpid()}\n".encode())

    def release_lock(self):
        if self._lock_fd is not None:
            os.close(self._lock_fd)
            self._lock_fd = None
            try:
                (self.path / LOCK_NAME).unlink()
            except FileNotFoundError:
                pass


def _populate(store: BackendStore, k: int, t: float) -> BackendStore:
    sb = codec.default_superblock(store.B, store.N, k, t)
    empty_pair = codec.encode_block_pair(codec.EMPTY, codec.EMPTY, store.B)
    store._write_raw(0, codec.seal(codec.encode_superblock(sb), store.key, _aad(0)).to_bytes())
    for i in range(1, store.N):
        store._write_raw(i, codec.seal(empty_pair, store.key, _aad(i)).to_bytes())
    return store


def check_params(N: int, B: int, k: int, t: float) -> None:
    codec.Layout(B)
    if N < 4:
        raise BadParams("N must be at least 4")
    if not 1 <= k <= N - 1:
        raise BadParams("k must satisfy 1 <= k <= N-1")
    if not t > 0:
        raise BadParams("t must be positive")


def init_backend(path, N: int, B: int, key: bytes, *, k: int = 3, t: float = 10.0) -> BackendStore:
    """Create a fresh backend: an empty superblock in file 0 and empty block
    pairs everywhere else. ``path=None`` builds an in-memory store."""
    check_params(N, B, k, t)
    if path is None:
        return _populate(MemoryBackend(N, B, key), k, t)
    path = Path(path)
    if path.exists() and any(path.iterdir()):
        raise Exists(f"{path} is not empty")
    path.mkdir(parents=True, exist_ok=True)
    return _populate(DirectoryBackend(path, N, B, key), k, t)


def open_backend(path, key: bytes, *, readonly: bool = False) -> DirectoryBackend:
    """Open an existing backend directory; N and B are recovered from the
    files themselves and checked against the superblock."""
    path = Path(path)
    files = sorted(path.glob("*" + SUFFIX))
    if not files:
        raise BadParams(f"{path}: no backend files")
    N = len(files)
    B = files[0].stat().st_size - codec.ENVELOPE_OVERHEAD
    store = DirectoryBackend(path, N, B, key, readonly=readonly)
    try:
        sb = store.read_superblock()
    except AuthFail:
        raise AuthFail(f"{path}: cannot decrypt superblock (wrong key?)") from None
    if (sb.N, sb.B) != (N, B):
        raise BadParams(f"{path}: superblock says N={sb.N} B={sb.B}, found N={N} B={B}")
    store.read_count = 0
    return store


def default_trace_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".trace.csv")

