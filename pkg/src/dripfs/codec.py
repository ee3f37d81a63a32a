"""Bit-exact serialization of backend blocks, the superblock, filetable leaves
and directory files, plus the authenticated encryption wrapper applied to
every backend file.

Layouts (all integers big-endian):

block (B/2 bytes)
    empty : all zero bytes
    full  : 0x01, file_id u64, fragment_index u64, payload (padded to capacity)
    split : 0x02, count u16, count * (file_id u64, offset u32, length u32),
            fragment bytes at the recorded in-block offsets

superblock (B bytes)
    header, root table (slot u32, block_id u64), cache entries, zero padding

envelope
    nonce (12) || AES-GCM ciphertext || tag (16)
"""

from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import AuthFail, BadParams, DupName, Overfull

UNALLOCATED = 2**64 - 1
LEAF_FILE_ID = 2**64 - 2
ROOT_FILE_ID = 0

FLAG_EMPTY = 0x00
FLAG_FULL = 0x01
FLAG_SPLIT = 0x02

FULL_HEADER = struct.Struct(">BQQ")
SPLIT_HEADER = struct.Struct(">BH")
SPLIT_ENTRY = struct.Struct(">QII")

NONCE_SIZE = 12
TAG_SIZE = 16
ENVELOPE_OVERHEAD = NONCE_SIZE + TAG_SIZE
KEY_SIZE = 32

SB_MAGIC = b"DRIPFS\x00\x01"
SB_VERSION = 1
SB_HEADER = struct.Struct(">8sHIIHdQQIII")
ROOT_ITEM = struct.Struct(">IQ")
COUNT = struct.Struct(">I")
ENTRY_HEAD = struct.Struct(">QQBI")

# Sizing unit for leaf and cache capacities: an entry with a handful of
# block ids. Larger entries are allowed; capacity is enforced in bytes too.
NOMINAL_ENTRY_BYTES = 64

ENTRY_DIRECTORY = 0x01
ENTRY_TOMBSTONE = 0x02

DIR_ITEM = struct.Struct(">H")
DIR_ID = struct.Struct(">Q")

# Smallest block size that still holds a superblock header, a root slot and
# a few cache entries in the other half of the pair.
MIN_BLOCK_SIZE = 256


@dataclass(frozen=True)
class Layout:
    """Byte geometry derived from the backend file size ``B``."""

    B: int

    def __post_init__(self):
        if self.B % 2 or self.B // 2 < MIN_BLOCK_SIZE:
            raise BadParams(f"B must be even and >= {2 * MIN_BLOCK_SIZE}, got {self.B}")

    @property
    def block_size(self) -> int:
        return self.B // 2

    @property
    def data_capacity(self) -> int:
        """Payload bytes of a full block; the fragment size of every
        non-final fragment."""
        return self.block_size - FULL_HEADER.size

    @property
    def split_limit(self) -> int:
        """Longest fragment that fits in a fresh split block."""
        return self.block_size - SPLIT_HEADER.size - SPLIT_ENTRY.size

    @property
    def envelope_size(self) -> int:
        return self.B + ENVELOPE_OVERHEAD

    def is_small(self, length: int) -> bool:
        """Fragments that go into split blocks. Anything longer occupies a
        whole block on its own."""
        return 0 < length <= self.split_limit

    def fragment_count(self, size: int) -> int:
        return -(-size // self.data_capacity)

    def fragment_length(self, size: int, index: int) -> int:
        return max(0, min(self.data_capacity, size - index * self.data_capacity))


# --------------------------------------------------------------------------
# blocks


class EmptyBlock:
    __slots__ = ()
    kind = "empty"

    def __repr__(self):
        return "EmptyBlock()"

    def __eq__(self, other):
        return isinstance(other, EmptyBlock)

    def __hash__(self):
        return 0


EMPTY = EmptyBlock()


@dataclass(frozen=True)
class FullBlock:
    file_id: int
    fragment_index: int
    payload: bytes
    kind = "full"


@dataclass(frozen=True)
class SplitBlock:
    """Several small fragments packed into one block.

    ``pieces`` holds (file_id, data) in table order; offsets are assigned
    contiguously after the table when encoding.
    """

    pieces: tuple = ()
    kind = "split"

    def used_bytes(self) -> int:
        return split_used(len(d) for _, d in self.pieces)

    def extents(self) -> list:
        """(file_id, offset-in-block, length) for each piece."""
        offset = SPLIT_HEADER.size + SPLIT_ENTRY.size * len(self.pieces)
        out = []
        for fid, data in self.pieces:
            out.append((fid, offset, len(data)))
            offset += len(data)
        return out

    def find(self, file_id: int) -> Optional[bytes]:
        for fid, data in self.pieces:
            if fid == file_id:
                return data
        return None


Block = Union[EmptyBlock, FullBlock, SplitBlock]


def split_used(lengths: Iterable[int]) -> int:
    return SPLIT_HEADER.size + sum(SPLIT_ENTRY.size + n for n in lengths)


def block_occupancy(block: Block, block_size: int) -> int:
    """Bytes of a block that are spoken for: a full block counts whole."""
    if isinstance(block, FullBlock):
        return block_size
    if isinstance(block, SplitBlock) and block.pieces:
        return block.used_bytes()
    return 0


def encode_block(block: Block, block_size: int) -> bytes:
    if isinstance(block, EmptyBlock):
        return bytes(block_size)
    if isinstance(block, FullBlock):
        cap = block_size - FULL_HEADER.size
        if len(block.payload) > cap:
            raise Overfull(f"full-block payload {len(block.payload)} > {cap}")
        head = FULL_HEADER.pack(FLAG_FULL, block.file_id, block.fragment_index)
        return head + block.payload + bytes(cap - len(block.payload))
    if isinstance(block, SplitBlock):
        used = block.used_bytes()
        if used > block_size:
            raise Overfull(f"split block needs {used} bytes, block holds {block_size}")
        if len(block.pieces) > 0xFFFF:
            raise Overfull("too many split-block entries")
        parts = [SPLIT_HEADER.pack(FLAG_SPLIT, len(block.pieces))]
        for fid, off, length in block.extents():
            parts.append(SPLIT_ENTRY.pack(fid, off, length))
        parts.extend(d for _, d in block.pieces)
        parts.append(bytes(block_size - used))
        return b"".join(parts)
    raise TypeError(f"not a block: {block!r}")


def decode_block(buf: bytes) -> Block:
    flag = buf[0]
    if flag == FLAG_EMPTY:
        return EMPTY
    if flag == FLAG_FULL:
        _, fid, idx = FULL_HEADER.unpack_from(buf)
        return FullBlock(fid, idx, bytes(buf[FULL_HEADER.size:]))
    if flag == FLAG_SPLIT:
        _, count = SPLIT_HEADER.unpack_from(buf)
        table_end = SPLIT_HEADER.size + count * SPLIT_ENTRY.size
        if table_end > len(buf):
            raise ValueError("split table overruns block")
        pieces = []
        cursor = table_end
        for i in range(count):
            fid, off, length = SPLIT_ENTRY.unpack_from(buf, SPLIT_HEADER.size + i * SPLIT_ENTRY.size)
            if off < cursor or off + length > len(buf):
                raise ValueError("split extent out of bounds or overlapping")
            pieces.append((fid, bytes(buf[off:off + length])))
            cursor = off + length
        return SplitBlock(tuple(pieces))
    raise ValueError(f"unknown block flag {flag:#x}")


def encode_block_pair(left: Block, right: Block, B: int) -> bytes:
    half = B // 2
    return encode_block(left, half) + encode_block(right, half)


def decode_block_pair(buf: bytes) -> tuple:
    half = len(buf) // 2
    mv = memoryview(buf)
    return decode_block(mv[:half]), decode_block(mv[half:])


# --------------------------------------------------------------------------
# file entries


@dataclass(frozen=True)
class FileEntry:
    file_id: int
    size: int = 0
    block_ids: tuple = ()
    is_directory: bool = False

    def nbytes(self) -> int:
        return ENTRY_HEAD.size + 8 * len(self.block_ids)


def entry_nbytes(entry: Optional[FileEntry]) -> int:
    return ENTRY_HEAD.size if entry is None else entry.nbytes()


def encode_entry(file_id: int, entry: Optional[FileEntry]) -> bytes:
    """``entry=None`` encodes a tombstone for ``file_id``."""
    if entry is None:
        return ENTRY_HEAD.pack(file_id, 0, ENTRY_TOMBSTONE, 0)
    flags = ENTRY_DIRECTORY if entry.is_directory else 0
    ids = entry.block_ids
    return ENTRY_HEAD.pack(entry.file_id, entry.size, flags, len(ids)) + struct.pack(f">{len(ids)}Q", *ids)


def decode_entry(buf, offset: int = 0) -> tuple:
    """Returns (file_id, entry-or-None, next_offset)."""
    fid, size, flags, n = ENTRY_HEAD.unpack_from(buf, offset)
    offset += ENTRY_HEAD.size
    if flags & ENTRY_TOMBSTONE:
        return fid, None, offset
    ids = struct.unpack_from(f">{n}Q", buf, offset)
    offset += 8 * n
    return fid, FileEntry(fid, size, tuple(ids), bool(flags & ENTRY_DIRECTORY)), offset


def encode_leaf(entries: Iterable[FileEntry], capacity: int) -> bytes:
    """Leaf node payload, sorted by file id and zero padded to ``capacity``."""
    entries = sorted(entries, key=lambda e: e.file_id)
    body = COUNT.pack(len(entries)) + b"".join(encode_entry(e.file_id, e) for e in entries)
    if len(body) > capacity:
        raise Overfull(f"leaf needs {len(body)} bytes, block holds {capacity}")
    return body + bytes(capacity - len(body))


def decode_leaf(payload: bytes) -> dict:
    (count,) = COUNT.unpack_from(payload)
    offset = COUNT.size
    out = {}
    for _ in range(count):
        fid, entry, offset = decode_entry(payload, offset)
        out[fid] = entry
    return out


# --------------------------------------------------------------------------
# superblock


@dataclass
class Superblock:
    B: int
    N: int
    k: int
    t: float
    leaf_capacity: int
    cache_capacity: int
    next_file_id: int = 1
    epoch: int = 0
    root: dict = field(default_factory=dict)
    # (file_id, FileEntry or None for a tombstone), in cache order
    cache: list = field(default_factory=list)

    def lookup(self, file_id: int):
        """Returns the cached entry, None for a tombstone, or raises KeyError."""
        for fid, entry in self.cache:
            if fid == file_id:
                return entry
        raise KeyError(file_id)


def default_superblock(B: int, N: int, k: int, t: float) -> Superblock:
    """Fresh superblock: empty B-tree root and a cache holding only the
    (empty) root directory entry."""
    layout = Layout(B)
    leaf_cap = max(1, layout.data_capacity // NOMINAL_ENTRY_BYTES)
    cache_cap = max(4, cache_region(B, root_capacity(B)) // (2 * NOMINAL_ENTRY_BYTES))
    root_dir = FileEntry(ROOT_FILE_ID, 0, (), True)
    return Superblock(B, N, k, t, leaf_cap, cache_cap, next_file_id=1, epoch=0,
                      root={}, cache=[(ROOT_FILE_ID, root_dir)])


def root_capacity(B: int) -> int:
    """Root slots that fit in one block's worth of the superblock."""
    return (B // 2 - SB_HEADER.size - COUNT.size) // ROOT_ITEM.size


def cache_region(B: int, root_slots: int) -> int:
    """Bytes left for cache entries once ``root_slots`` root items are stored."""
    return B - SB_HEADER.size - root_slots * ROOT_ITEM.size - COUNT.size


def encode_superblock(sb: Superblock) -> bytes:
    if len(sb.root) > root_capacity(sb.B):
        raise Overfull("B-tree root exceeds its region")
    parts = [SB_HEADER.pack(SB_MAGIC, SB_VERSION, sb.B, sb.N, sb.k, float(sb.t), sb.next_file_id,
                            sb.epoch, sb.leaf_capacity, sb.cache_capacity, len(sb.root))]
    for slot in sorted(sb.root):
        parts.append(ROOT_ITEM.pack(slot, sb.root[slot]))
    parts.append(COUNT.pack(len(sb.cache)))
    parts.extend(encode_entry(fid, e) for fid, e in sb.cache)
    out = b"".join(parts)
    if len(out) > sb.B:
        raise Overfull(f"superblock needs {len(out)} bytes, has {sb.B}")
    return out + bytes(sb.B - len(out))


def decode_superblock(buf: bytes) -> Superblock:
    (magic, version, B, N, k, t, next_id, epoch, leaf_cap, cache_cap,
     nroot) = SB_HEADER.unpack_from(buf)
    if magic != SB_MAGIC or version != SB_VERSION:
        raise ValueError("not a superblock")
    offset = SB_HEADER.size
    root = {}
    for _ in range(nroot):
        slot, bid = ROOT_ITEM.unpack_from(buf, offset)
        root[slot] = bid
        offset += ROOT_ITEM.size
    (ncache,) = COUNT.unpack_from(buf, offset)
    offset += COUNT.size
    cache = []
    for _ in range(ncache):
        fid, entry, offset = decode_entry(buf, offset)
        cache.append((fid, entry))
    return Superblock(B, N, k, t, leaf_cap, cache_cap, next_id, epoch, root, cache)


# --------------------------------------------------------------------------
# directories


def _check_name(name: str) -> bytes:
    if not name or "/" in name or "\x00" in name or name in (".", ".."):
        raise BadParams(f"invalid file name {name!r}")
    raw = name.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise BadParams("file name too long")
    return raw


def encode_directory(entries: Iterable[tuple]) -> bytes:
    """Serialize (name, file_id) pairs in the given order. An empty
    directory is the empty byte string."""
    seen = set()
    parts = []
    for name, fid in entries:
        if name in seen:
            raise DupName(name)
        seen.add(name)
        raw = _check_name(name)
        parts.append(DIR_ITEM.pack(len(raw)) + raw + DIR_ID.pack(fid))
    return b"".join(parts)


def decode_directory(buf: bytes) -> list:
    out = []
    offset = 0
    while offset < len(buf):
        (n,) = DIR_ITEM.unpack_from(buf, offset)
        offset += DIR_ITEM.size
        name = bytes(buf[offset:offset + n]).decode("utf-8")
        offset += n
        (fid,) = DIR_ID.unpack_from(buf, offset)
        offset += DIR_ID.size
        out.append((name, fid))
    return out


# --------------------------------------------------------------------------
# encryption


@dataclass(frozen=True)
class CipherEnvelope:
    nonce: bytes
    ciphertext: bytes
    tag: bytes

    def to_bytes(self) -> bytes:
        return self.nonce + self.ciphertext + self.tag

    @classmethod
    def from_bytes(cls, raw: bytes) -> "CipherEnvelope":
        if len(raw) < ENVELOPE_OVERHEAD:
            raise AuthFail("envelope too short")
        return cls(raw[:NONCE_SIZE], raw[NONCE_SIZE:-TAG_SIZE], raw[-TAG_SIZE:])


def new_key() -> bytes:
    return os.urandom(KEY_SIZE)


def derive_key(passphrase: Union[str, bytes], salt: bytes, n: int = 2**14, r: int = 8, p: int = 1) -> bytes:
    """scrypt passphrase-to-key derivation."""
    if isinstance(passphrase, str):
        passphrase = passphrase.encode("utf-8")
    return hashlib.scrypt(passphrase, salt=salt, n=n, r=r, p=p, dklen=KEY_SIZE,
                          maxmem=128 * r * n * p + 2**20)


def seal(plaintext: bytes, key: bytes, aad: bytes = b"", nonce: Optional[bytes] = None) -> CipherEnvelope:
    nonce = os.urandom(NONCE_SIZE) if nonce is None else nonce
    ct = AESGCM(key).encrypt(nonce, plaintext, aad)
    return CipherEnvelope(nonce, ct[:-TAG_SIZE], ct[-TAG_SIZE:])


def unseal(env: Union[CipherEnvelope, bytes], key: bytes, aad: bytes = b"") -> bytes:
    if not isinstance(env, CipherEnvelope):
        env = CipherEnvelope.from_bytes(env)
    try:
        return AESGCM(key).decrypt(env.nonce, env.ciphertext + env.tag, aad)
    except InvalidTag:
        raise AuthFail("authentication failed (tampered data or wrong key)") from None
