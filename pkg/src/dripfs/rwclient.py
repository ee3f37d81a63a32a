"""The single read/write client.

Frontend operations only touch memory: the working filetable, the shadow
table and the pending-writes buffer. Once per epoch ``tick`` flushes the
previous epoch's staged files and runs one sync: pick k random block pairs,
drop stale fragments, re-pack them with buffered fragments, and stage the
re-encrypted pairs plus the superblock. The set of files written per epoch
is k+1 whatever the workload.
"""

from __future__ import annotations

import logging
import random
import threading
import time
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Callable, Optional

from . import codec
from .backend import BackendStore
from .codec import EMPTY, LEAF_FILE_ID, UNALLOCATED, FileEntry, FullBlock, SplitBlock
from .errors import (BadOffset, BadParams, Exists, IsADirectory, NotADirectory, NotFound, TableFull,
                     Unavailable)
from .fstable import FileTable, ShadowTable, parent_and_name, path_resolve

log = logging.getLogger(__name__)


class FragmentClass(IntEnum):
    """Drain priority, lowest first."""

    DIRECTORY = 0
    LEAF = 1
    REGULAR = 2


@dataclass
class BufferedFragment:
    file_id: int
    fragment_index: int
    data: bytes
    enqueue_time: float
    cls: FragmentClass = FragmentClass.REGULAR

    @property
    def key(self):
        return (self.file_id, self.fragment_index)


class PendingBuffer:
    """Priority-FIFO of fragments awaiting an oblivious commit.

    One slot per (file_id, fragment_index); rewriting a buffered fragment
    replaces its bytes but keeps its place in the queue.
    """

    def __init__(self, leaf_size: int):
        self._queues = {c: OrderedDict() for c in FragmentClass}
        self._per_file: dict = {}
        self._nbytes = 0
        self.leaf_size = leaf_size

    def _len_of(self, frag):
        return self.leaf_size if frag.cls is FragmentClass.LEAF else len(frag.data)

    def put(self, frag: BufferedFragment) -> None:
        for q in self._queues.values():
            old = q.get(frag.key)
            if old is not None:
                self._nbytes += self._len_of(frag) - self._len_of(old)
                old.data = frag.data
                return
        self._queues[frag.cls][frag.key] = frag
        self._per_file[frag.file_id] = self._per_file.get(frag.file_id, 0) + 1
        self._nbytes += self._len_of(frag)

    def get(self, file_id: int, index: int) -> Optional[BufferedFragment]:
        for q in self._queues.values():
            frag = q.get((file_id, index))
            if frag is not None:
                return frag
        return None

    def remove(self, key) -> None:
        for q in self._queues.values():
            frag = q.pop(key, None)
            if frag is not None:
                self._nbytes -= self._len_of(frag)
                n = self._per_file[frag.file_id] - 1
                if n:
                    self._per_file[frag.file_id] = n
                else:
                    del self._per_file[frag.file_id]
                return

    def discard_file(self, file_id: int, from_index: int = 0) -> None:
        if file_id not in self._per_file:
            return
        for q in self._queues.values():
            for key in [k for k in q if k[0] == file_id and k[1] >= from_index]:
                self.remove(key)

    def has_file(self, file_id: int) -> bool:
        return file_id in self._per_file

    def files(self) -> set:
        return set(self._per_file)

    def __iter__(self):
        for c in FragmentClass:
            yield from list(self._queues[c].values())

    def __len__(self):
        return sum(len(q) for q in self._queues.values())

    @property
    def nbytes(self) -> int:
        return self._nbytes


@dataclass
class SyncConfig:
    k: int = 3
    t: float = 10.0
    seed: Optional[int] = None

    def __post_init__(self):
        if self.k < 1:
            raise BadParams("drip rate k must be >= 1")
        if not self.t > 0:
            raise BadParams("drip time t must be > 0")


@dataclass
class SyncReport:
    epoch: int
    time: float
    pairs_chosen: tuple
    fragments_cleared: int
    buffer_bytes_before: int
    buffer_bytes_remaining: int
    stale_fragments: int = 0
    chosen_occupancy: int = 0
    empty_blocks_left: int = 0
    twin_blocked: bool = False
    compute_seconds: float = 0.0
    overrun: bool = False
    pair_free: dict = field(default_factory=dict)
    placements: list = field(default_factory=list, repr=False)


@dataclass
class Resident:
    """One fragment found in a backend block during a sync."""

    position: int
    file_id: int
    fragment_index: Optional[int]
    data: bytes
    small: bool
    live: bool


def uniform_pairs(rng, N: int, k: int) -> list:
    """k distinct pair indices drawn uniformly from 1..N-1."""
    return rng.sample(range(1, N), k)


class RWClient:
    def __init__(self, store: BackendStore, config: Optional[SyncConfig] = None, *,
                 selector: Optional[Callable] = None, force_lock: bool = False):
        self.store = store
        self.layout = store.layout
        store.acquire_lock(force=force_lock)
        try:
            sb = store.read_superblock()
        except Exception:
            store.release_lock()
            raise
        if config is None:
            config = SyncConfig(sb.k, sb.t)
        if config.k > store.N - 1:
            raise BadParams("drip rate exceeds number of block pairs")
        self.config = config
        self.rng = random.Random(config.seed) if config.seed is not None else random.SystemRandom()
        self.selector = selector or uniform_pairs
        self._template = replace(sb, k=config.k, t=config.t)
        self.table = FileTable.from_superblock(sb, self._load_leaf)
        self.working = self.table.entries()
        self.shadow = ShadowTable()
        self.buffer = PendingBuffer(self.layout.data_capacity)
        self.next_file_id = sb.next_file_id
        self.epoch = sb.epoch
        self.lock = threading.RLock()
        self.reports: list = []
        self.overruns = 0
        self._staged_epoch: Optional[int] = None
        self._dirs: dict = {}  # decoded listings, dropped whenever a directory changes
        # test hook, called with a stage name at each step-4 boundary
        self.fault: Optional[Callable[[str], None]] = None
        self.closed = False

    # ------------------------------------------------------------------
    # backend block access

    def _load_leaf(self, slot: int, bid: int) -> dict:
        block = self.store.read_pair(bid // 2)[bid % 2]
        if not (isinstance(block, FullBlock) and block.file_id == LEAF_FILE_ID and block.fragment_index == slot):
            raise Unavailable(f"leaf {slot} missing at block {bid}")
        return codec.decode_leaf(block.payload)

    def _pair_blocks(self, pair: int):
        plain = self.store.staged_plain(pair)
        if plain is None:
            plain = self.store.read_plain(pair)
        return codec.decode_block_pair(plain)

    def _fragment_at(self, entry: FileEntry, index: int) -> Optional[bytes]:
        """Bytes of one fragment through the block-id list, None if the slot
        is unallocated."""
        bid = entry.block_ids[index]
        if bid == UNALLOCATED:
            return None
        length = self.layout.fragment_length(entry.size, index)
        return locate_fragment(self._pair_blocks(bid // 2), bid, entry.file_id, index, length, self.layout)

    def _fragment_bytes(self, fid: int, index: int, entry: Optional[FileEntry] = None) -> Optional[bytes]:
        frag = self.buffer.get(fid, index)
        if frag is not None:
            return frag.data
        return self._fragment_at(entry or self.working[fid], index)

    # ------------------------------------------------------------------
    # views

    def published_entry(self, fid: int) -> Optional[FileEntry]:
        return self.shadow.resolve(fid, self.working)

    def published_view(self) -> dict:
        return self.shadow.publish_view(self.working)

    def _entry(self, fid: int) -> FileEntry:
        try:
            return self.working[fid]
        except KeyError:
            raise NotFound(f"file id {fid}") from None

    def _list_dir(self, fid: int) -> list:
        entry = self._entry(fid)
        if not entry.is_directory:
            raise NotADirectory(f"file id {fid}")
        listing = self._dirs.get(fid)
        if listing is None:
            listing = self._dirs[fid] = codec.decode_directory(self._read_range(fid, 0, entry.size))
        return list(listing)

    def resolve(self, path: str) -> int:
        with self.lock:
            return path_resolve(path, self._entry, self._list_dir)

    def stat(self, path: str) -> FileEntry:
        with self.lock:
            return self._entry(self.resolve(path))

    def listdir(self, path: str = "/") -> list:
        with self.lock:
            return [name for name, _ in self._list_dir(self.resolve(path))]

    # ------------------------------------------------------------------
    # frontend operations

    def create(self, path: str, directory: bool = False, now: float = 0.0) -> int:
        with self.lock:
            parent, name = parent_and_name(path)
            pid = self.resolve(parent)
            listing = self._list_dir(pid)
            if any(n == name for n, _ in listing):
                raise Exists(path)
            fid = self.next_file_id
            self.table.check_id(fid)
            entry = FileEntry(fid, 0, (), directory)
            self._check_metadata(fid, entry)
            self.next_file_id += 1
            self.shadow.protect(fid, None)
            self.working[fid] = entry
            self._set_contents(pid, codec.encode_directory(listing + [(name, fid)]), now)
            return fid

    def mkdir(self, path: str, now: float = 0.0) -> int:
        return self.create(path, directory=True, now=now)

    def delete(self, path: str, now: float = 0.0) -> None:
        with self.lock:
            parent, name = parent_and_name(path)
            pid = self.resolve(parent)
            listing = self._list_dir(pid)
            fid = next((f for n, f in listing if n == name), None)
            if fid is None:
                raise NotFound(path)
            entry = self._entry(fid)
            if entry.is_directory and entry.size:
                raise IsADirectory(f"{path}: directory not empty")
            self._set_contents(pid, codec.encode_directory([(n, f) for n, f in listing if f != fid]), now)
            self.shadow.protect(fid, self.published_entry(fid))
            self.shadow.hold(fid, pid)
            del self.working[fid]
            self.buffer.discard_file(fid)

    def write(self, path: str, offset: int, data: bytes, now: float = 0.0) -> None:
        with self.lock:
            fid = self.resolve(path)
            if self._entry(fid).is_directory:
                raise IsADirectory(path)
            self._write_range(fid, offset, bytes(data), FragmentClass.REGULAR, now)

    def put(self, path: str, data: bytes, now: float = 0.0) -> int:
        """Create-or-replace a whole file."""
        with self.lock:
            try:
                fid = self.resolve(path)
            except NotFound:
                fid = self.create(path, now=now)
            if self._entry(fid).is_directory:
                raise IsADirectory(path)
            self._set_contents(fid, bytes(data), now, FragmentClass.REGULAR)
            return fid

    def read(self, path: str, offset: int = 0, length: Optional[int] = None) -> bytes:
        with self.lock:
            fid = self.resolve(path)
            if self._entry(fid).is_directory:
                raise IsADirectory(path)
            return self._read_range(fid, offset, length)

    def resize(self, path: str, size: int, now: float = 0.0) -> None:
        with self.lock:
            fid = self.resolve(path)
            if self._entry(fid).is_directory:
                raise IsADirectory(path)
            if size < 0:
                raise BadParams("negative size")
            self._resize(fid, size, FragmentClass.REGULAR, now)

    # -- internals -------------------------------------------------------

    def _read_range(self, fid: int, offset: int, length: Optional[int]) -> bytes:
        entry = self._entry(fid)
        if offset < 0:
            raise BadOffset("negative offset")
        end = entry.size if length is None else min(entry.size, offset + length)
        if offset >= end:
            return b""
        cap = self.layout.data_capacity
        parts = []
        for idx in range(offset // cap, -(-end // cap)):
            data = self._fragment_bytes(fid, idx, entry)
            if data is None:
                raise Unavailable(f"file id {fid} fragment {idx} is not available yet")
            lo = max(offset, idx * cap) - idx * cap
            hi = min(end, (idx + 1) * cap) - idx * cap
            parts.append(data[lo:hi])
        return b"".join(parts)

    def _buffer(self, fid, idx, data, cls, now):
        self._dirs.pop(fid, None)
        self.buffer.put(BufferedFragment(fid, idx, data, now, cls))

    def _class_of(self, fid, cls):
        return FragmentClass.DIRECTORY if self.working[fid].is_directory else cls

    def _resize(self, fid: int, size: int, cls: FragmentClass, now: float) -> None:
        entry = self._entry(fid)
        if size == entry.size:
            return
        lay = self.layout
        cls = self._class_of(fid, cls)
        old_n, new_n = lay.fragment_count(entry.size), lay.fragment_count(size)
        ids = list(entry.block_ids)
        new_entry = replace(entry, size=size, block_ids=tuple(ids[:new_n]) + (UNALLOCATED,) * max(0, new_n - old_n))
        self._check_metadata(fid, new_entry)
        self.shadow.protect(fid, self.published_entry(fid))
        if size < entry.size:
            self.buffer.discard_file(fid, from_index=new_n)
            last = new_n - 1
        else:
            last = old_n - 1
        # the fragment at the old/new boundary changes length
        if last >= 0 and lay.fragment_length(entry.size, last) != lay.fragment_length(size, last):
            data = self._fragment_bytes(fid, last, entry)
            if data is not None:
                want = lay.fragment_length(size, last)
                data = data[:want] + bytes(max(0, want - len(data)))
                self._buffer(fid, last, data, cls, now)
        self.working[fid] = new_entry
        self._dirs.pop(fid, None)

    def _write_range(self, fid: int, offset: int, data: bytes, cls: FragmentClass, now: float) -> None:
        cap = self.layout.data_capacity
        if offset < 0 or offset % cap:
            raise BadOffset(f"offset {offset} is not a multiple of the block capacity {cap}")
        if not data:
            return
        end = offset + len(data)
        if end > self._entry(fid).size:
            self._resize(fid, end, cls, now)
        entry = self.working[fid]
        cls = self._class_of(fid, cls)
        self.shadow.protect(fid, self.published_entry(fid))
        for idx in range(offset // cap, -(-end // cap)):
            flen = self.layout.fragment_length(entry.size, idx)
            try:
                old = self._fragment_bytes(fid, idx, entry)
            except Unavailable:
                old = None
            base = old if old is not None else bytes(flen)
            lo = max(offset, idx * cap)
            hi = min(end, idx * cap + flen)
            new = base[:lo - idx * cap] + data[lo - offset:hi - offset] + base[hi - idx * cap:]
            if old is None or new != old:
                self._buffer(fid, idx, new, cls, now)

    def _set_contents(self, fid: int, data: bytes, now: float, cls: FragmentClass = FragmentClass.DIRECTORY) -> None:
        entry = self._entry(fid)
        if len(data) != entry.size:
            self._resize(fid, len(data), cls, now)
        self._write_range(fid, 0, data, cls, now)

    def _check_metadata(self, fid: int, entry: FileEntry) -> None:
        """Refuse changes whose published form could not fit the superblock
        or the file's leaf node."""
        tbl = self.table
        if entry.nbytes() > tbl.leaf_bytes:
            raise TableFull(f"file id {fid}: entry of {entry.nbytes()} bytes exceeds a leaf")
        slot = tbl.slot_of(fid)
        leaf = 0
        for f in range(slot * tbl.leaf_capacity, min((slot + 1) * tbl.leaf_capacity, self.next_file_id + 1)):
            e = entry if f == fid else self.working.get(f)
            p = self.published_entry(f)
            leaf += max(e.nbytes() if e else 0, p.nbytes() if p else 0)
        if leaf > tbl.leaf_bytes:
            raise TableFull(f"leaf {slot} would overflow")
        projected = tbl.persisted_nbytes() + entry.nbytes()
        projected += sum(self.working[f].nbytes() for f in self.shadow.entries if f in self.working)
        if projected > tbl.cache_bytes:
            raise TableFull("file-entry cache region full; retry after the next epochs")

    # ------------------------------------------------------------------
    # sync engine

    def resident_fragments(self, pair: int, blocks) -> list:
        """Classify every fragment of a decoded pair as live or stale.

        A full-block fragment is live when some working or shadow entry of
        its file lists this exact block id at that fragment index (leaf
        nodes: when the B-tree root points at it). A small fragment is live
        when some entry's final fragment is small, of this length, and
        lives in this pair.
        """
        out = []
        for pos, block in enumerate(blocks):
            bid = 2 * pair + pos
            if isinstance(block, FullBlock):
                out.append(Resident(pos, block.file_id, block.fragment_index, block.payload, False,
                                    self._full_live(block.file_id, block.fragment_index, bid)))
            elif isinstance(block, SplitBlock):
                for fid, data in block.pieces:
                    out.append(Resident(pos, fid, None, data, True, self._small_live(fid, pair, len(data))))
        return out

    def _views(self, fid):
        e = self.working.get(fid)
        if e is not None:
            yield e
        s = self.shadow.entries.get(fid)
        if s is not None:
            yield s

    def _full_live(self, fid, idx, bid) -> bool:
        if fid == LEAF_FILE_ID:
            return self.table.root.get(idx) == bid
        lay = self.layout
        for e in self._views(fid):
            if idx < len(e.block_ids) and e.block_ids[idx] == bid and not lay.is_small(lay.fragment_length(e.size, idx)):
                return True
        return False

    def _small_live(self, fid, pair, length) -> bool:
        lay = self.layout
        for e in self._views(fid):
            if not e.block_ids:
                continue
            last = len(e.block_ids) - 1
            bid = e.block_ids[last]
            if (bid != UNALLOCATED and bid // 2 == pair and lay.fragment_length(e.size, last) == length
                    and lay.is_small(length)):
                return True
        return False

    def sync_epoch(self, now: float = 0.0) -> SyncReport:
        """Compute one epoch and stage its k+1 files."""
        with self.lock:
            started = time.perf_counter()
            lay = self.layout
            bsize = lay.block_size
            chosen = sorted(self.selector(self.rng, self.store.N, self.config.k))
            if len(set(chosen)) != self.config.k or not all(1 <= p < self.store.N for p in chosen):
                raise BadParams(f"selector returned invalid pairs {chosen}")
            before = self.buffer.nbytes

            # step 2: decrypt and find stale fragments
            slots = []  # [pair, pos, kind, content]; kind in {"empty","full","split"}
            stale = 0
            small_fids = {}
            for p in chosen:
                residents = self.resident_fragments(p, self.store.read_pair(p))
                stale += sum(not r.live for r in residents)
                live = [r for r in residents if r.live]
                full = {r.position: r for r in live if not r.small}
                smalls = [(r.file_id, r.data) for r in live if r.small]
                small_fids[p] = {fid for fid, _ in smalls}
                # step 3a: full blocks stay; small fragments consolidate within the pair
                kinds = []
                for pos in (0, 1):
                    if pos in full:
                        r = full[pos]
                        kinds.append(["full", FullBlock(r.file_id, r.fragment_index, r.data)])
                    else:
                        kinds.append(["empty", None])
                free = [pos for pos in (0, 1) if kinds[pos][0] == "empty"]
                if smalls:
                    if codec.split_used(len(d) for _, d in smalls) <= bsize:
                        kinds[free[0]] = ["split", smalls]
                    else:
                        # cannot merge; keep each block's own pieces
                        for pos in free:
                            mine = [(r.file_id, r.data) for r in live if r.small and r.position == pos]
                            if mine:
                                kinds[pos] = ["split", mine]
                for pos in (0, 1):
                    slots.append([p, pos] + kinds[pos])

            # step 3b: drain the buffer in priority-FIFO order
            placements = []
            twin_blocked = False
            for frag in self.buffer:
                empties = sum(1 for s in slots if s[2] == "empty")
                if frag.cls is FragmentClass.LEAF:
                    length = lay.data_capacity
                else:
                    length = len(frag.data)
                if not empties and not any(
                        s[2] == "split" and codec.split_used(len(d) for _, d in s[3]) + codec.SPLIT_ENTRY.size < bsize
                        for s in slots):
                    break
                target = None
                if lay.is_small(length):
                    for s in slots:
                        if s[2] == "split" and codec.split_used([len(d) for _, d in s[3]] + [length]) <= bsize:
                            if frag.file_id in small_fids[s[0]]:
                                twin_blocked = True
                                continue
                            target = s
                            break
                    if target is None:
                        for s in slots:
                            if s[2] == "empty":
                                if frag.file_id in small_fids[s[0]]:
                                    twin_blocked = True
                                    continue
                                target = s
                                break
                    if target is None:
                        continue
                    if target[2] == "empty":
                        target[2], target[3] = "split", []
                    target[3].append((frag.file_id, frag.data))
                    small_fids[target[0]].add(frag.file_id)
                else:
                    target = next((s for s in slots if s[2] == "empty"), None)
                    if target is None:
                        continue
                    if frag.cls is FragmentClass.LEAF:
                        payload = self.table.leaf_payload(frag.fragment_index)
                        target[2], target[3] = "full", FullBlock(LEAF_FILE_ID, frag.fragment_index, payload)
                    else:
                        target[2], target[3] = "full", FullBlock(frag.file_id, frag.fragment_index, frag.data)
                placements.append((frag, 2 * target[0] + target[1]))

            # step 4: data first, then the buffer, then the filetable
            blocks = {}
            for p, pos, kind, content in slots:
                if kind == "full":
                    blocks[(p, pos)] = content
                elif kind == "split" and content:
                    blocks[(p, pos)] = SplitBlock(tuple(content))
                else:
                    blocks[(p, pos)] = EMPTY
            plaintexts = {p: codec.encode_block_pair(blocks[(p, 0)], blocks[(p, 1)], self.store.B) for p in chosen}
            occupancy = sum(codec.block_occupancy(b, bsize) for b in blocks.values())
            empties_left = sum(1 for b in blocks.values() if b == EMPTY)

            self._fault("data_written")
            for frag, _ in placements:
                self.buffer.remove(frag.key)
            self._fault("buffer_removed")
            for frag, bid in placements:
                if frag.cls is FragmentClass.LEAF:
                    self.table.land_leaf(frag.fragment_index, bid)
                else:
                    e = self.working[frag.file_id]
                    ids = list(e.block_ids)
                    ids[frag.fragment_index] = bid
                    self.working[frag.file_id] = replace(e, block_ids=tuple(ids))
            for fid, _old, new in self.shadow.reconcile(self.buffer.has_file, self.working):
                if new is None:
                    self.table.remove(fid)
                else:
                    self.table.upsert(new)
            for slot in sorted(self.table.dirty):
                if self.buffer.get(LEAF_FILE_ID, slot) is None:
                    self.buffer.put(BufferedFragment(LEAF_FILE_ID, slot, b"", now, FragmentClass.LEAF))

            self._fault("table_updated")
            self.epoch += 1
            sb = self.table.to_superblock(self._template, self.next_file_id, self.epoch)
            sb_plain = codec.encode_superblock(sb)
            for p in chosen:
                self.store.stage(p, plaintexts[p])
            self.store.stage(0, sb_plain)
            self._staged_epoch = self.epoch

            elapsed = time.perf_counter() - started
            report = SyncReport(self.epoch, now, tuple(chosen), len(placements), before, self.buffer.nbytes,
                                stale, occupancy, empties_left, twin_blocked, elapsed,
                                elapsed > self.config.t,
                                {p: sum(blocks[(p, pos)] == EMPTY for pos in (0, 1)) for p in chosen}, placements)
            if report.overrun:
                self.overruns += 1
                log.warning("epoch %d overran the drip time (%.3fs > %.3fs)", self.epoch, elapsed, self.config.t)
            self.reports.append(report)
            return report

    def _fault(self, stage: str) -> None:
        if self.fault is not None:
            self.fault(stage)

    def tick(self, now: float, wall: Optional[float] = None, crash_after: Optional[int] = None) -> SyncReport:
        """One timer tick: flush the previous epoch, then compute the next."""
        if self.store.has_staged:
            self.store.flush(self._staged_epoch, now, now if wall is None else wall, crash_after=crash_after)
        return self.sync_epoch(now)

    def flush(self, now: float, wall: Optional[float] = None, crash_after: Optional[int] = None):
        if self.store.has_staged:
            return self.store.flush(self._staged_epoch, now, now if wall is None else wall, crash_after=crash_after)
        return None

    @property
    def idle(self) -> bool:
        """Nothing buffered and nothing awaiting publication."""
        return len(self.buffer) == 0 and len(self.shadow) == 0

    def __getstate__(self):
        state = dict(self.__dict__)
        del state["lock"]
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self.lock = threading.RLock()

    def fork(self) -> "RWClient":
        """Independent deep copy, backend included. Only sensible for
        in-memory backends; used by simulations that branch one state."""
        import copy

        return copy.deepcopy(self)

    def close(self) -> None:
        self.closed = True
        self.store.release_lock()


def locate_fragment(blocks, bid: int, fid: int, index: int, length: int, layout: codec.Layout) -> bytes:
    """Find a fragment in a decoded pair. Small fragments may sit in either
    block of the pair; full ones must be at their exact block id with a
    matching header."""
    if layout.is_small(length):
        for block in blocks:
            if isinstance(block, SplitBlock):
                data = block.find(fid)
                if data is not None and len(data) == length:
                    return data
        raise Unavailable(f"small fragment of file {fid} not in pair {bid // 2}")
    block = blocks[bid % 2]
    if isinstance(block, FullBlock) and block.file_id == fid and block.fragment_index == index:
        return block.payload[:length]
    raise Unavailable(f"fragment {index} of file {fid} not at block {bid}")


def run_scheduler(client: RWClient, clock, epochs: Optional[int] = None, *, until_idle: bool = False,
                  max_epochs: int = 1_000_000, on_tick: Optional[Callable] = None,
                  start: Optional[float] = None) -> list:
    """Drive ``client`` on ``clock``: ticks exactly t apart, one flush and one
    sync per tick. Stops after ``epochs`` ticks, or once everything written
    so far is published on the backend (``until_idle``)."""
    if epochs is None and not until_idle:
        raise BadParams("give epochs or until_idle")
    t = client.config.t
    start = clock.now() if start is None else start
    reports = []
    if not client.store.has_staged:
        reports.append(client.tick(start, clock.wall()))
    i = 0
    while i < max_epochs and (epochs is None or i < epochs):
        # once idle, one more tick puts the epoch that published everything on disk
        last = until_idle and client.idle
        i += 1
        clock.sleep_until(start + i * t)
        # the trace records the scheduled instant; the wall column shows jitter
        rep = client.tick(start + i * t, clock.wall())
        reports.append(rep)
        if on_tick is not None:
            on_tick(client, rep)
        if last:
            break
    return reports


def close_on_tick(client: RWClient, clock) -> None:
    """Flush the pending epoch on the next tick boundary and unmount."""
    if client.store.has_staged:
        last = client.reports[-1].time if client.reports else clock.now()
        clock.sleep_until(last + client.config.t)
        client.flush(last + client.config.t, clock.wall())
    client.close()
