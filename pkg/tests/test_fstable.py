from collections import Counter

import pytest
from hypothesis import given, strategies as st

from dripfs import codec
from dripfs.codec import FileEntry
from dripfs.errors import BadParams, NotADirectory, NotFound, TableFull
from dripfs.fstable import FileTable, PublishedView, ShadowTable, most_common_leaf, parent_and_name, path_resolve


def entry(fid, size=10, ids=(2,)):
    return FileEntry(fid, size, tuple(ids))


def brute_most_common(fids, cap):
    counts = Counter(f // cap for f in fids)
    if not counts:
        return None
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]


@given(st.lists(st.integers(0, 500)), st.integers(1, 40))
def test_most_common_leaf_matches_brute_force(fids, cap):
    assert most_common_leaf(fids, cap) == brute_most_common(fids, cap)


def test_most_common_leaf_examples():
    # three ids in leaf A, two in leaf B
    assert most_common_leaf([1, 2, 3, 11, 12], 10) == 0
    assert most_common_leaf([11, 12, 1, 2], 10) == 0  # tie goes low
    assert most_common_leaf([], 10) is None


def table(cache=4, leaf=10, slots=100):
    return FileTable(leaf, slots, cache, 10_000, 100_000)


def test_upsert_evicts_most_common_leaf():
    t = table(cache=4)
    for fid in (1, 2, 3, 11):
        assert t.upsert(entry(fid)) is None
    assert t.leaf_writes == 0 and not t.dirty
    assert t.upsert(entry(12)) == 0
    assert set(t.cache) == {11, 12}
    assert set(t.leaves[0]) == {1, 2, 3}
    assert t.dirty == {0}
    # until the leaf lands the evicted entries still travel in the superblock
    assert {fid for fid, _ in t.persisted_cache()} == {1, 2, 3, 11, 12}
    t.land_leaf(0, 40)
    assert t.root == {0: 40} and not t.pending
    assert {fid for fid, _ in t.persisted_cache()} == {11, 12}
    assert t.lookup(2) == entry(2)


def test_remove_masks_leaf_entry():
    t = table(cache=2)
    for fid in (1, 2, 3):
        t.upsert(entry(fid))
    t.land_leaf(0, 40)
    t.remove(2)
    with pytest.raises(NotFound):
        t.lookup(2)
    assert (2, None) in t.persisted_cache()
    assert 2 not in t.entries()


def test_land_empty_leaf_drops_slot():
    t = table(cache=1)
    t.upsert(entry(1))
    t.upsert(entry(15))
    t.land_leaf(0, 40)
    t.remove(1)
    t.upsert(entry(16))
    t.upsert(entry(17))
    assert 0 in t.dirty
    t.land_leaf(0, 42)
    assert 0 not in t.root


def test_table_full():
    t = table(leaf=10, slots=2)
    with pytest.raises(TableFull):
        t.upsert(entry(25))


def test_ten_thousand_files_one_leaf_read():
    leaf_cap = 64
    t = FileTable(leaf_cap, 1000, 100, 10**6, 10**7)
    leaves_on_disk = {}
    next_bid = 2
    for fid in range(1, 10_001):
        t.upsert(entry(fid, fid, (fid,)))
        for slot in sorted(t.dirty):
            leaves_on_disk[next_bid] = dict(t.leaves[slot])
            t.land_leaf(slot, next_bid)
            next_bid += 1
    sb = t.to_superblock(codec.default_superblock(65536, 256, 3, 10.0), 10_001, 1)
    assert len(sb.cache) <= 100
    view = PublishedView(sb, lambda slot, bid: leaves_on_disk[bid])
    for fid in range(1, 10_001):
        before = view.leaf_reads
        assert view.lookup(fid).size == fid
        assert view.leaf_reads - before <= 1


def test_shadow_table_semantics():
    sh = ShadowTable()
    old, new = entry(5, 10), entry(5, 20)
    working = {5: new, 6: entry(6)}
    sh.protect(5, old)
    sh.protect(5, new)  # keeps the first (oldest) version
    sh.protect(6, None)
    assert sh.resolve(5, working) == old
    assert sh.resolve(6, working) is None
    assert sh.publish_view(working) == {5: old}
    busy = {5}
    assert sh.reconcile(busy.__contains__, working) == [(6, None, working[6])]
    assert sh.reconcile(lambda f: False, working) == [(5, old, new)]
    assert len(sh) == 0


def test_shadow_hold_waits_for_parent():
    sh = ShadowTable()
    sh.protect(7, entry(7))
    sh.hold(7, 0)
    assert sh.reconcile(lambda f: f == 0, {}) == []
    assert sh.reconcile(lambda f: False, {}) == [(7, entry(7), None)]


def test_paths():
    assert parent_and_name("/a/b/c") == ("/a/b", "c")
    assert parent_and_name("/x") == ("/", "x")
    with pytest.raises(BadParams):
        parent_and_name("/")
    with pytest.raises(BadParams):
        parent_and_name("rel")
    entries = {0: FileEntry(0, 0, (), True), 3: FileEntry(3, 0, (), True), 4: entry(4)}
    dirs = {0: [("d", 3)], 3: [("f", 4)]}
    res = lambda p: path_resolve(p, entries.__getitem__, dirs.__getitem__)
    assert res("/") == 0
    assert res("/d/f") == 4
    with pytest.raises(NotFound):
        res("/d/g")
    with pytest.raises(NotADirectory):
        res("/d/f/x")
