"""Binary containers for codebooks, code sets and trees (little endian).

Codebook ``ETCB``: u32 version, d, M, K, then M*K*(d/M) float32 in (m, k, dim) order.
Codes    ``ETCD``: u32 version, N, M, K, then N records of (u32 id, M chunk bytes).
Tree     ``ETRE``: u32 version, N, M, K, M bytes chunk permutation, u32 tree count,
                   then per tree u32 layer_offset, u32 layer_count, u64 length, bytes.
"""

from __future__ import annotations

import struct

import numpy as np

from .eforest import EForest, single_tree
from .errors import MalformedFileError
from .etree import ChunkOrder, ETree
from .quantizer import Codebook, EncodedDataset

VERSION = 1
_HEAD = struct.Struct("<4sIIII")


def _read_head(raw: bytes, magic: bytes):
    if len(raw) < _HEAD.size:
        raise MalformedFileError("file shorter than header", 0)
    tag, version, a, b, c = _HEAD.unpack_from(raw)
    if tag != magic:
        raise MalformedFileError(f"bad magic {tag!r}, expected {magic!r}", 0)
    if version != VERSION:
        raise MalformedFileError(f"unsupported version {version}", 4)
    return a, b, c


def _read(path) -> bytes:
    with open(path, "rb") as f:
        return f.read()


def save_codebook(path, cb: Codebook):
    with open(path, "wb") as f:
        f.write(_HEAD.pack(b"ETCB", VERSION, cb.d, cb.M, cb.K))
        f.write(cb.centroids.astype("<f4").tobytes())


def load_codebook(path) -> Codebook:
    raw = _read(path)
    d, M, K = _read_head(raw, b"ETCB")
    if M == 0 or d % M:
        raise MalformedFileError(f"d={d} not divisible by M={M}", 8)
    need = _HEAD.size + 4 * d * K
    if len(raw) != need:
        raise MalformedFileError(f"expected {need} bytes, found {len(raw)}", min(len(raw), need))
    c = np.frombuffer(raw, dtype="<f4", offset=_HEAD.size).reshape(M, K, d // M)
    return Codebook(c.astype(np.float32))


def save_codes(path, ds: EncodedDataset):
    recs = np.empty(ds.N, dtype=[("id", "<u4"), ("c", "u1", (ds.M,))])
    recs["id"] = ds.ids
    recs["c"] = ds.codes
    with open(path, "wb") as f:
        f.write(_HEAD.pack(b"ETCD", VERSION, ds.N, ds.M, ds.K))
        f.write(recs.tobytes())


def load_codes(path) -> EncodedDataset:
    raw = _read(path)
    N, M, K = _read_head(raw, b"ETCD")
    rec = 4 + M
    need = _HEAD.size + N * rec
    if len(raw) != need:
        raise MalformedFileError(f"expected {need} bytes, found {len(raw)}", min(len(raw), need))
    recs = np.frombuffer(raw, dtype=[("id", "<u4"), ("c", "u1", (M,))], offset=_HEAD.size, count=N)
    return EncodedDataset(recs["c"].copy(), recs["id"].copy(), K)


def save_tree(path, tree: ETree | EForest):
    forest = single_tree(tree) if isinstance(tree, ETree) else tree
    with open(path, "wb") as f:
        f.write(_HEAD.pack(b"ETRE", VERSION, forest.N, forest.M, forest.K))
        f.write(forest.chunk_order.permutation.astype(np.uint8).tobytes())
        f.write(struct.pack("<I", forest.T))
        for t in forest.trees:
            f.write(struct.pack("<IIQ", t.layer_offset, t.layer_count, t.nbytes))
            f.write(t.buffer.tobytes())


def load_tree(path, validate: bool = True) -> EForest:
    """Load an ``ETRE`` file as a forest (``T == 1`` for a single tree).

    With ``validate`` every buffer is fully parsed, so corruption raises here.
    """
    raw = _read(path)
    N, M, K = _read_head(raw, b"ETRE")
    pos = _HEAD.size
    if len(raw) < pos + M + 4:
        raise MalformedFileError("truncated chunk permutation", pos)
    perm = np.frombuffer(raw, dtype=np.uint8, count=M, offset=pos).astype(np.int64)
    pos += M
    try:
        order = ChunkOrder(perm, "original" if np.array_equal(perm, np.arange(M)) else "random")
    except ValueError as e:
        raise MalformedFileError(str(e), _HEAD.size) from None
    (T,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    trees = []
    for _ in range(T):
        if len(raw) < pos + 16:
            raise MalformedFileError("truncated tree header", pos)
        off, cnt, length = struct.unpack_from("<IIQ", raw, pos)
        pos += 16
        if len(raw) < pos + length:
            raise MalformedFileError("truncated tree buffer", pos)
        buf = np.frombuffer(raw, dtype=np.uint8, count=length, offset=pos).copy()
        pos += length
        tree = ETree(buf, N, M, K, order, off, cnt)
        if validate:
            tree._parsed()
        trees.append(tree)
    if pos != len(raw):
        raise MalformedFileError("trailing bytes after last tree", pos)
    return EForest(tuple(trees), N, M, K, order)
