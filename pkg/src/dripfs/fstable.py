"""Filetable machinery: the persisted B-tree (root in the superblock, one
level of leaf blocks), the file-entry cache with most-common-leaf eviction,
the shadow table that keeps readers on fully-synced versions, and path
resolution over directory files."""

from __future__ import annotations

from collections import Counter, OrderedDict
from typing import Callable, Iterable, Optional

from . import codec
from .codec import FileEntry
from .errors import BadParams, NotADirectory, NotFound, TableFull


def most_common_leaf(file_ids: Iterable[int], leaf_capacity: int) -> Optional[int]:
    """Slot holding the most file ids; ties go to the lowest slot."""
    counts = Counter(fid // leaf_capacity for fid in file_ids)
    if not counts:
        return None
    best = max(counts.values())
    return min(slot for slot, n in counts.items() if n == best)


class FileTable:
    """The persisted (published) filetable as maintained by the writer.

    ``cache`` and ``pending`` together are what the superblock stores;
    ``leaves`` mirrors leaf-node contents, ``root`` maps slot to the block id
    of the last written leaf. Entries evicted from the cache stay in
    ``pending`` (and therefore in the superblock) until their leaf has been
    written, so readers never lose sight of them.
    """

    def __init__(self, leaf_capacity: int, root_capacity: int, cache_capacity: int,
                 leaf_bytes: int, cache_bytes: int):
        self.leaf_capacity = leaf_capacity
        self.root_capacity = root_capacity
        self.cache_capacity = cache_capacity
        self.leaf_bytes = leaf_bytes
        self.cache_bytes = cache_bytes
        self.cache: OrderedDict = OrderedDict()
        self.leaves: dict = {}
        self.root: dict = {}
        self.pending: dict = {}
        self.dirty: set = set()
        self.leaf_writes = 0

    @classmethod
    def for_layout(cls, sb: codec.Superblock) -> "FileTable":
        layout = codec.Layout(sb.B)
        rcap = codec.root_capacity(sb.B)
        return cls(sb.leaf_capacity, rcap, sb.cache_capacity, layout.data_capacity - codec.COUNT.size,
                   codec.cache_region(sb.B, rcap))

    @classmethod
    def from_superblock(cls, sb: codec.Superblock, load_leaf: Callable[[int, int], dict]) -> "FileTable":
        table = cls.for_layout(sb)
        table.root = dict(sb.root)
        for slot, bid in sb.root.items():
            table.leaves[slot] = dict(load_leaf(slot, bid))
        for fid, entry in sb.cache:
            table.cache[fid] = entry
        return table

    @property
    def max_files(self) -> int:
        return self.leaf_capacity * self.root_capacity

    def slot_of(self, file_id: int) -> int:
        return file_id // self.leaf_capacity

    def check_id(self, file_id: int) -> None:
        if self.slot_of(file_id) >= self.root_capacity:
            raise TableFull(f"file id {file_id} beyond table capacity {self.max_files}")

    # -- queries ------------------------------------------------------------

    def lookup(self, file_id: int) -> FileEntry:
        if file_id in self.cache:
            entry = self.cache[file_id]
            if entry is None:
                raise NotFound(f"file id {file_id}")
            return entry
        entry = self.leaves.get(self.slot_of(file_id), {}).get(file_id)
        if entry is None:
            raise NotFound(f"file id {file_id}")
        return entry

    def entries(self) -> dict:
        """Every live published entry."""
        out = {}
        for leaf in self.leaves.values():
            out.update(leaf)
        for fid, entry in self.cache.items():
            if entry is None:
                out.pop(fid, None)
            else:
                out[fid] = entry
        return out

    def persisted_cache(self) -> list:
        """(file_id, entry-or-tombstone) pairs the superblock must carry."""
        out = list(self.cache.items())
        for slot in sorted(self.pending):
            for fid, entry in self.pending[slot].items():
                if fid not in self.cache:
                    out.append((fid, entry))
        return out

    def persisted_nbytes(self) -> int:
        return sum(codec.entry_nbytes(e) for _, e in self.persisted_cache())

    # -- updates ------------------------------------------------------------

    def upsert(self, entry: FileEntry) -> Optional[int]:
        """Insert or replace a published entry. Returns the leaf slot that was
        evicted (and is now dirty) if the cache overflowed."""
        self.check_id(entry.file_id)
        self.cache[entry.file_id] = entry
        self.cache.move_to_end(entry.file_id)
        return self._maybe_evict()

    def remove(self, file_id: int) -> Optional[int]:
        slot = self.slot_of(file_id)
        if file_id in self.leaves.get(slot, {}):
            # the on-disk leaf still lists it; mask it until the leaf is rewritten
            self.cache[file_id] = None
            self.cache.move_to_end(file_id)
            return self._maybe_evict()
        self.cache.pop(file_id, None)
        return None

    def _maybe_evict(self) -> Optional[int]:
        if len(self.cache) <= self.cache_capacity:
            return None
        slot = most_common_leaf(self.cache, self.leaf_capacity)
        self.evict(slot)
        return slot

    def evict(self, slot: int) -> None:
        """Move every cached entry of ``slot`` into that leaf and mark it
        for rewriting."""
        group = [fid for fid in self.cache if self.slot_of(fid) == slot]
        leaf = self.leaves.setdefault(slot, {})
        pend = self.pending.setdefault(slot, {})
        for fid in group:
            entry = self.cache.pop(fid)
            if entry is None:
                leaf.pop(fid, None)
            else:
                leaf[fid] = entry
            pend[fid] = entry
        self.dirty.add(slot)

    def leaf_payload(self, slot: int) -> bytes:
        return codec.encode_leaf(self.leaves.get(slot, {}).values(), self.leaf_bytes + codec.COUNT.size)

    def land_leaf(self, slot: int, block_id: int) -> None:
        """The leaf for ``slot`` now lives at ``block_id``."""
        if self.leaves.get(slot):
            self.root[slot] = block_id
        else:
            # nothing left in the leaf; drop the slot rather than keep an empty node
            self.root.pop(slot, None)
            self.leaves.pop(slot, None)
        self.pending.pop(slot, None)
        self.dirty.discard(slot)
        self.leaf_writes += 1

    def leaf_nbytes(self, slot: int, extra: Optional[dict] = None) -> int:
        """Serialized size of a leaf's entries, with ``extra`` overriding."""
        merged = dict(self.leaves.get(slot, {}))
        if extra:
            merged.update(extra)
        return sum(e.nbytes() for e in merged.values() if e is not None)

    def to_superblock(self, template: codec.Superblock, next_file_id: int, epoch: int) -> codec.Superblock:
        return codec.Superblock(template.B, template.N, template.k, template.t, self.leaf_capacity,
                                self.cache_capacity, next_file_id, epoch, dict(self.root),
                                self.persisted_cache())


class PublishedView:
    """Read-side filetable: the superblock cache plus leaves fetched on
    demand through ``load_leaf(slot, block_id)``."""

    def __init__(self, sb: codec.Superblock, load_leaf: Callable[[int, int], dict]):
        self.sb = sb
        self.cache = dict(sb.cache)
        self.load_leaf = load_leaf
        self.leaf_reads = 0

    def lookup(self, file_id: int) -> FileEntry:
        if file_id in self.cache:
            entry = self.cache[file_id]
            if entry is None:
                raise NotFound(f"file id {file_id}")
            return entry
        slot = file_id // self.sb.leaf_capacity
        bid = self.sb.root.get(slot)
        if bid is None:
            raise NotFound(f"file id {file_id}")
        self.leaf_reads += 1
        entry = self.load_leaf(slot, bid).get(file_id)
        if entry is None:
            raise NotFound(f"file id {file_id}")
        return entry


class ShadowTable:
    """Published versions of files whose newest contents are not fully
    synced.

    A value of None means the file has no synced version yet and is
    invisible to readers. Deleted files can be held until their parent
    directory's new listing is synced (``hold``).
    """

    def __init__(self):
        self.entries: dict = {}
        self.holds: dict = {}

    def __contains__(self, file_id):
        return file_id in self.entries

    def __len__(self):
        return len(self.entries)

    def protect(self, file_id: int, published: Optional[FileEntry]) -> None:
        """Record the current published version before the working entry
        changes. A file already shadowed keeps its older version."""
        self.entries.setdefault(file_id, published)

    def hold(self, file_id: int, parent_id: int) -> None:
        self.holds[file_id] = parent_id

    def resolve(self, file_id: int, working: dict) -> Optional[FileEntry]:
        """The version readers see."""
        if file_id in self.entries:
            return self.entries[file_id]
        return working.get(file_id)

    def publish_view(self, working: dict) -> dict:
        view = {fid: e for fid, e in working.items() if fid not in self.entries}
        view.update({fid: e for fid, e in self.entries.items() if e is not None})
        return view

    def reconcile(self, busy: Callable[[int], bool], working: dict) -> list:
        """Release shadows of files that are no longer busy. Returns
        (file_id, old_published, new_published) for each release."""
        changed = []
        for fid in list(self.entries):
            if busy(fid):
                continue
            parent = self.holds.get(fid)
            if parent is not None and busy(parent):
                continue
            old = self.entries.pop(fid)
            self.holds.pop(fid, None)
            new = working.get(fid)
            if old != new:
                changed.append((fid, old, new))
        return changed


# --------------------------------------------------------------------------
# paths


def split_path(path: str) -> list:
    if not path.startswith("/"):
        raise BadParams(f"path must be absolute: {path!r}")
    return [p for p in path.split("/") if p]


def parent_and_name(path: str) -> tuple:
    parts = split_path(path)
    if not parts:
        raise BadParams("the root directory has no parent")
    return "/" + "/".join(parts[:-1]), parts[-1]


def path_resolve(path: str, entry_of: Callable[[int], FileEntry],
                 list_dir: Callable[[int], list]) -> int:
    """Walk directory files from the root (file id 0)."""
    fid = codec.ROOT_FILE_ID
    for name in split_path(path):
        if not entry_of(fid).is_directory:
            raise NotADirectory(path)
        for child, child_id in list_dir(fid):
            if child == name:
                fid = child_id
                break
        else:
            raise NotFound(path)
    return fid

