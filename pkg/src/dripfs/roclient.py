"""Read-only client.

Everything is resolved through the published filetable in the superblock,
so a reader only ever sees fully synced file versions. One fragment costs at
most three backend reads: the superblock, one leaf node and the data pair.
"""

from __future__ import annotations

import fnmatch
import logging
from dataclasses import dataclass
from typing import Iterable, Optional

from . import codec
from .backend import BackendStore
from .clock import VirtualClock
from .codec import UNALLOCATED, FileEntry, FullBlock, LEAF_FILE_ID
from .errors import IsADirectory, NotADirectory, NotFound, Unavailable
from .fstable import PublishedView, path_resolve
from .rwclient import locate_fragment

log = logging.getLogger(__name__)


class ROClient:
    def __init__(self, store: BackendStore, *, ttl: Optional[float] = None, clock=None):
        self.store = store
        self.layout = store.layout
        self.clock = clock or VirtualClock()
        self._sb: Optional[codec.Superblock] = None
        self._sb_time = float("-inf")
        self._decoded: dict = {}  # index -> (raw, decoded), reused while bytes are unchanged
        self._leaves: dict = {}
        self._view: Optional[PublishedView] = None
        self.superblock()
        self.ttl = self._sb.t / 2 if ttl is None else ttl

    # -- backend access ----------------------------------------------------

    def _decode(self, index: int):
        raw = self.store.read_raw(index)
        hit = self._decoded.get(index)
        if hit is not None and hit[0] == raw:
            return hit[1]
        plain = self.store.decrypt(index, raw)
        value = codec.decode_superblock(plain) if index == 0 else codec.decode_block_pair(plain)
        self._decoded[index] = (raw, value)
        return value

    def superblock(self, force: bool = False) -> codec.Superblock:
        now = self.clock.now()
        if force or self._sb is None or now - self._sb_time >= getattr(self, "ttl", 0.0):
            sb = self._decode(0)
            if sb is not self._sb:
                self._sb = sb
                self._leaves = {}
                self._view = PublishedView(sb, self._load_leaf)
            self._sb_time = now
        return self._sb

    def refresh(self) -> codec.Superblock:
        return self.superblock(force=True)

    @property
    def epoch(self) -> int:
        return self._sb.epoch

    def _load_leaf(self, slot: int, bid: int) -> dict:
        key = (slot, bid)
        if key not in self._leaves:
            block = self._decode(bid // 2)[bid % 2]
            if not (isinstance(block, FullBlock) and block.file_id == LEAF_FILE_ID and block.fragment_index == slot):
                raise Unavailable(f"leaf {slot} not found at block {bid}")
            self._leaves[key] = codec.decode_leaf(block.payload)
        return self._leaves[key]

    # -- lookups -----------------------------------------------------------

    def lookup(self, file_id: int) -> FileEntry:
        self.superblock()
        return self._view.lookup(file_id)

    def _fragment(self, entry: FileEntry, index: int) -> bytes:
        bid = entry.block_ids[index]
        if bid == UNALLOCATED:
            raise Unavailable(f"file id {entry.file_id} fragment {index} is not available yet")
        length = self.layout.fragment_length(entry.size, index)
        return locate_fragment(self._decode(bid // 2), bid, entry.file_id, index, length, self.layout)

    def read_fragment(self, file_id: int, index: int) -> tuple:
        """Uncached single-fragment read. Returns (bytes, backend reads used)."""
        before = self.store.read_count
        sb = self._decode(0)
        view = PublishedView(sb, self._load_leaf_uncached)
        entry = view.lookup(file_id)
        if not 0 <= index < len(entry.block_ids):
            raise NotFound(f"file id {file_id} has no fragment {index}")
        data = self._fragment(entry, index)
        return data, self.store.read_count - before

    def _load_leaf_uncached(self, slot: int, bid: int) -> dict:
        block = self._decode(bid // 2)[bid % 2]
        if not (isinstance(block, FullBlock) and block.file_id == LEAF_FILE_ID and block.fragment_index == slot):
            raise Unavailable(f"leaf {slot} not found at block {bid}")
        return codec.decode_leaf(block.payload)

    def _read_entry(self, entry: FileEntry, offset: int = 0, length: Optional[int] = None) -> bytes:
        end = entry.size if length is None else min(entry.size, offset + length)
        if offset >= end:
            return b""
        cap = self.layout.data_capacity
        parts = []
        for idx in range(offset // cap, -(-end // cap)):
            data = self._fragment(entry, idx)
            parts.append(data[max(offset, idx * cap) - idx * cap:min(end, (idx + 1) * cap) - idx * cap])
        return b"".join(parts)

    def _list_dir(self, file_id: int) -> list:
        entry = self.lookup(file_id)
        if not entry.is_directory:
            raise NotADirectory(f"file id {file_id}")
        return codec.decode_directory(self._read_entry(entry))

    def resolve(self, path: str) -> int:
        self.superblock()
        return path_resolve(path, self._view.lookup, self._list_dir)

    def stat(self, path: str) -> FileEntry:
        return self.lookup(self.resolve(path))

    def listdir(self, path: str = "/") -> list:
        return [name for name, _ in self._list_dir(self.resolve(path))]

    def read(self, path: str, offset: int = 0, length: Optional[int] = None) -> bytes:
        """Published contents of ``path``. A file whose directory entry is
        synced but whose data is not yet raises Unavailable."""
        fid = self.resolve(path)
        try:
            entry = self.lookup(fid)
        except NotFound:
            raise Unavailable(f"{path}: listed but not yet synced") from None
        if entry.is_directory:
            raise IsADirectory(path)
        return self._read_entry(entry, offset, length)

    def walk(self, path: str = "/") -> list:
        """Every regular file path below ``path`` that the published view lists."""
        out = []
        stack = [(path.rstrip("/") or "", self.resolve(path))]
        while stack:
            prefix, fid = stack.pop()
            for name, child in self._list_dir(fid):
                full = f"{prefix}/{name}"
                try:
                    entry = self.lookup(child)
                except NotFound:
                    out.append(full)
                    continue
                if entry.is_directory:
                    stack.append((full, child))
                else:
                    out.append(full)
        return sorted(out)


@dataclass(frozen=True)
class VisibilityEvent:
    path: str
    epoch: int
    time: float
    size: int


class Watcher:
    """Reports the first moment each matching path is fully readable."""

    def __init__(self, client: ROClient, patterns: Iterable[str]):
        self.client = client
        self.patterns = list(patterns)
        self.seen: dict = {}

    def _matches(self, path: str) -> bool:
        return any(fnmatch.fnmatchcase(path, p) for p in self.patterns)

    def poll(self, now: Optional[float] = None) -> list:
        ro = self.client
        ro.refresh()
        now = ro.clock.now() if now is None else now
        events = []
        try:
            paths = ro.walk("/")
        except (Unavailable, NotFound):
            return events
        for path in paths:
            if path in self.seen or not self._matches(path):
                continue
            try:
                data = ro.read(path)
            except (Unavailable, NotFound):
                continue
            ev = VisibilityEvent(path, ro.epoch, now, len(data))
            self.seen[path] = ev
            events.append(ev)
        return events


def watch(client: ROClient, patterns: Iterable[str], clock, *, interval: Optional[float] = None,
          until: Optional[float] = None):
    """Generator of visibility events, polling every ``interval`` seconds."""
    w = Watcher(client, patterns)
    step = interval or client.ttl or client.superblock().t / 2
    while until is None or clock.now() <= until:
        yield from w.poll(clock.now())
        clock.sleep_until(clock.now() + step)
