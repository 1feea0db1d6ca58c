"""Encoding Tree: a compressed prefix tree over PQ codes in a flat byte buffer.

Record layout (all records are contiguous, pre-order depth first)::

    internal: [chunk][depth << 1]                         2 bytes
    leaf:     [chunk][count << 1 | 1][postfix][ids]       2 + P + 4 * count bytes

``depth`` is the layer whose chunk the internal node consumes.  A leaf that
sits at layer ``l`` consumes layer ``l`` through its chunk byte and layers
``l + 1 .. M - 1`` through a postfix of ``M - l - 1`` bytes.  Ids are uint32
little endian.

A leaf header has no room for its depth, so children of every node are
written leaves first, then internal children.  A leaf therefore always
follows its parent or a sibling leaf, and its layer is "depth of the last
internal record + 1".  After a subtree closes, the next record is always
internal and states its own depth.

A node is internal exactly when at least two distinct codes lie below it;
a path leading to a single code is folded into that leaf's postfix.  More
than 127 identical codes are written as consecutive leaf records with the
same chunk and postfix, each carrying at most 127 ids.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import (
    ConfigError,
    CorruptBufferError,
    EmptyDatasetError,
    PreconditionViolation,
)
from .quantizer import MAX_K, EncodedDataset

MAX_LEAF_IDS = 127
MAX_DEPTH = 127


@dataclass(frozen=True, eq=False)
class ChunkOrder:
    """A permutation applied to code chunks before sorting.

    ``permutation[i]`` names the original chunk placed at layer ``i``.
    """

    permutation: np.ndarray
    mode: str = "original"
    seed: int | None = None

    def __post_init__(self):
        p = np.asarray(self.permutation, dtype=np.int64)
        if p.ndim != 1 or not np.array_equal(np.sort(p), np.arange(p.size)):
            raise ConfigError(f"config error: {self.permutation!r} is not a permutation")
        p.setflags(write=False)
        object.__setattr__(self, "permutation", p)

    @classmethod
    def identity(cls, M: int) -> "ChunkOrder":
        return cls(np.arange(M), "original")

    @classmethod
    def randomized(cls, M: int, seed: int = 0) -> "ChunkOrder":
        return cls(np.random.default_rng(seed).permutation(M), "random", seed)

    @property
    def M(self) -> int:
        return self.permutation.size

    @property
    def is_identity(self) -> bool:
        return bool(np.array_equal(self.permutation, np.arange(self.M)))

    def __eq__(self, other):
        if not isinstance(other, ChunkOrder):
            return NotImplemented
        return np.array_equal(self.permutation, other.permutation)


@dataclass(frozen=True)
class TreeStats:
    N: int
    M: int
    L1: int
    L2: int
    total_postfix: int
    buffer_bytes: int

    @property
    def avg_postfix(self) -> float:
        return self.total_postfix / self.L2 if self.L2 else 0.0

    @property
    def n_prime(self) -> int:
        return self.L1 + self.L2

    @property
    def memory_bytes(self) -> int:
        return 4 * self.N + 2 * (self.L1 + self.L2) + self.total_postfix

    @property
    def formula_ok(self) -> bool:
        return self.memory_bytes == self.buffer_bytes

    @property
    def lookups(self) -> int:
        """Table lookups one traversal performs."""
        return self.L1 + self.L2 + self.total_postfix

    def as_dict(self) -> dict:
        return {
            "N": self.N, "M": self.M, "L1": self.L1, "L2": self.L2,
            "total_postfix": self.total_postfix, "avg_postfix": self.avg_postfix,
            "n_prime": self.n_prime, "memory_bytes": self.memory_bytes,
            "buffer_bytes": self.buffer_bytes, "formula_ok": self.formula_ok,
        }


# --------------------------------------------------------------------------
# sorting


def sort_encodings(ds: EncodedDataset, order: ChunkOrder | None = None) -> EncodedDataset:
    """Permute chunks by ``order`` and sort codes lexicographically (stable)."""
    if order is None:
        order = ChunkOrder.identity(ds.M)
    if order.M != ds.M:
        raise ConfigError(f"config error: order has {order.M} chunks, dataset has {ds.M}")
    codes = ds.codes[:, order.permutation] if not order.is_identity else ds.codes
    if ds.N == 0:
        return EncodedDataset(codes.copy(), ds.ids.copy(), ds.K)
    # lexsort keys: last key is primary
    idx = np.lexsort(codes.T[::-1])
    return EncodedDataset(np.ascontiguousarray(codes[idx]), ds.ids[idx], ds.K)


def _check_sorted(codes: np.ndarray):
    if codes.shape[0] < 2:
        return
    neq = codes[1:] != codes[:-1]
    rows = np.flatnonzero(neq.any(axis=1))
    col = neq[rows].argmax(axis=1)
    bad = codes[rows + 1, col] < codes[rows, col]
    if bad.any():
        i = int(rows[bad.argmax()])
        raise PreconditionViolation(
            f"precondition violation: codes not sorted at positions {i}, {i + 1}")


# --------------------------------------------------------------------------
# construction


@njit(cache=True)
def _emit_leaf(uniq, j, p, ids, start, stop, buf, pos, write):
    m = uniq.shape[1]
    plen = m - p - 1
    a = start
    while a < stop:
        cnt = min(MAX_LEAF_IDS, stop - a)
        if write:
            buf[pos] = uniq[j, p]
            buf[pos + 1] = (cnt << 1) | 1
            for t in range(plen):
                buf[pos + 2 + t] = uniq[j, p + 1 + t]
            q = pos + 2 + plen
            for t in range(cnt):
                v = ids[a + t]
                buf[q] = v & 0xFF
                buf[q + 1] = (v >> 8) & 0xFF
                buf[q + 2] = (v >> 16) & 0xFF
                buf[q + 3] = (v >> 24) & 0xFF
                q += 4
        pos += 2 + plen + 4 * cnt
        a += cnt
    return pos


@njit(cache=True)
def _emit(uniq, starts, ids, buf, write):
    """Write (or size, when ``write`` is false) the tree over distinct codes.

    ``uniq`` holds the sorted distinct codes; code ``j`` owns
    ``ids[starts[j]:starts[j + 1]]``.
    """
    g, m = uniq.shape
    cap = m * 257 + 2
    st_lo = np.empty(cap, dtype=np.int64)
    st_hi = np.empty(cap, dtype=np.int64)
    st_p = np.empty(cap, dtype=np.int64)
    top = 0
    st_lo[0] = 0
    st_hi[0] = g
    st_p[0] = 0
    top = 1
    pos = 0
    n_internal = 0
    n_leaf = 0
    postfix = 0
    while top > 0:
        top -= 1
        lo = st_lo[top]
        hi = st_hi[top]
        p = st_p[top]
        if p > 0:
            if write:
                buf[pos] = uniq[lo, p - 1]
                buf[pos + 1] = (p - 1) << 1
            pos += 2
            n_internal += 1
        # leaves first
        a = lo
        while a < hi:
            b = a + 1
            while b < hi and uniq[b, p] == uniq[a, p]:
                b += 1
            if b - a == 1:
                cnt = starts[a + 1] - starts[a]
                nrec = (cnt + MAX_LEAF_IDS - 1) // MAX_LEAF_IDS
                n_leaf += nrec
                postfix += nrec * (m - p - 1)
                pos = _emit_leaf(uniq, a, p, ids, starts[a], starts[a + 1], buf, pos, write)
            a = b
        # internal children, pushed in reverse so the first pops first
        b = hi
        while b > lo:
            a = b - 1
            while a > lo and uniq[a - 1, p] == uniq[b - 1, p]:
                a -= 1
            if b - a > 1:
                st_lo[top] = a
                st_hi[top] = b
                st_p[top] = p + 1
                top += 1
            b = a
    return pos, n_internal, n_leaf, postfix


def _group(codes: np.ndarray):
    n = codes.shape[0]
    new = np.ones(n, dtype=bool)
    if n > 1:
        new[1:] = (codes[1:] != codes[:-1]).any(axis=1)
    first = np.flatnonzero(new)
    starts = np.append(first, n).astype(np.int64)
    return np.ascontiguousarray(codes[first]), starts


@dataclass(frozen=True, eq=False)
class ETree:
    """A serialized Encoding Tree plus the metadata needed to traverse it.

    ``layer_offset``/``layer_count`` say which layers of the (chunk-order
    permuted) code this tree covers; a stand-alone tree covers all ``M``.
    """

    buffer: np.ndarray
    N: int
    M: int
    K: int
    chunk_order: ChunkOrder
    layer_offset: int = 0
    layer_count: int | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        buf = np.ascontiguousarray(self.buffer, dtype=np.uint8)
        buf.setflags(write=False)
        object.__setattr__(self, "buffer", buf)
        if self.layer_count is None:
            object.__setattr__(self, "layer_count", self.M - self.layer_offset)
        if self.chunk_order.M != self.M:
            raise ConfigError("config error: chunk order length differs from M")
        if not (0 <= self.layer_offset and 1 <= self.layer_count
                and self.layer_offset + self.layer_count <= self.M):
            raise ConfigError("config error: layer range outside [0, M)")
        if self.layer_count > MAX_DEPTH:
            raise ConfigError(f"config error: layer_count {self.layer_count} > {MAX_DEPTH}")

    @property
    def nbytes(self) -> int:
        return int(self.buffer.size)

    def __eq__(self, other):
        if not isinstance(other, ETree):
            return NotImplemented
        return (
            (self.N, self.M, self.K, self.layer_offset, self.layer_count)
            == (other.N, other.M, other.K, other.layer_offset, other.layer_count)
            and self.chunk_order == other.chunk_order
            and np.array_equal(self.buffer, other.buffer)
        )

    # parsed views are cached; the buffer is immutable
    def _parsed(self):
        if "parsed" not in self._cache:
            self._cache["parsed"] = parse(self.buffer, self.layer_count, self.K, self.N)
        return self._cache["parsed"]

    def _slots(self) -> np.ndarray:
        """DFS-ordered output slots, or an empty array when ids are already slots."""
        if "slots" not in self._cache:
            codes, ids, _ = self._parsed()
            if ids.size == 0 or (int(ids.max()) == self.N - 1):
                slots = np.empty(0, dtype=np.int64)
            else:
                slots = np.searchsorted(np.sort(ids), ids).astype(np.int64)
            self._cache["slots"] = slots
        return self._cache["slots"]

    def _views(self):
        if "views" not in self._cache:
            self._cache["views"] = _id_views(self.buffer)
        return self._cache["views"]

    def layer_table(self, table: np.ndarray) -> np.ndarray:
        """Rows of a natural-order ``(M, K)`` table in this tree's layer order."""
        table = np.asarray(table, dtype=np.float64)
        if table.ndim != 2 or table.shape[0] != self.M or table.shape[1] < self.K:
            raise ConfigError(
                f"config error: table shape {table.shape} does not match M={self.M}, K={self.K}")
        rows = self.chunk_order.permutation[self.layer_offset:self.layer_offset + self.layer_count]
        return np.ascontiguousarray(table[rows])


def construct(sorted_ds: EncodedDataset, order: ChunkOrder | None = None,
              layer_offset: int = 0, M: int | None = None) -> ETree:
    """Build the flat tree from lexicographically sorted codes.

    Args:
        sorted_ds: Codes already permuted and sorted (see :func:`sort_encodings`).
        order: The chunk order that was applied, recorded in the tree.
        layer_offset: First global layer covered (forest use).
        M: Global chunk count when ``sorted_ds`` holds a layer slice.
    """
    if sorted_ds.N == 0:
        raise EmptyDatasetError("empty dataset")
    m = sorted_ds.M
    if m < 1 or m > MAX_DEPTH:
        raise ConfigError(f"config error: tree depth {m} outside [1, {MAX_DEPTH}]")
    M = m + layer_offset if M is None else M
    if order is None:
        order = ChunkOrder.identity(M)
    codes = sorted_ds.codes
    _check_sorted(codes)
    uniq, starts = _group(codes)
    ids = sorted_ds.ids.astype(np.int64)
    size, *_ = _emit(uniq, starts, ids, np.empty(0, dtype=np.uint8), False)
    buf = np.empty(size, dtype=np.uint8)
    written, *_ = _emit(uniq, starts, ids, buf, True)
    assert written == size
    tree = ETree(buf, sorted_ds.N, M, sorted_ds.K, order, layer_offset, m)
    if int(sorted_ds.ids.max()) == sorted_ds.N - 1:
        tree._cache["slots"] = np.empty(0, dtype=np.int64)
    return tree


def build_tree(ds: EncodedDataset, order: ChunkOrder | None = None) -> ETree:
    """Sort ``ds`` under ``order`` and construct its tree."""
    if order is None:
        order = ChunkOrder.identity(ds.M)
    return construct(sort_encodings(ds, order), order)


# --------------------------------------------------------------------------
# parsing


@njit(cache=True)
def _parse(buf, m, k, codes, ids):
    """Validate the buffer and enumerate leaves in buffer order.

    Returns ``(status, offset, n_ids, L1, L2, total_postfix)``; ``status`` is 0
    on success, otherwise a small error number with the failing offset.
    """
    n = buf.shape[0]
    path = np.zeros(m, dtype=np.uint8)
    desc = np.zeros(m, dtype=np.int64)
    layer = 0
    pos = 0
    nid = 0
    L1 = 0
    L2 = 0
    postfix = 0
    prev_leaf = -1  # offset of the previous leaf record, if it was the previous record
    cap = ids.shape[0]
    while pos < n:
        if pos + 2 > n:
            return 1, pos, nid, L1, L2, postfix
        chunk = buf[pos]
        u = buf[pos + 1]
        if chunk >= k:
            return 2, pos, nid, L1, L2, postfix
        if u & 1 == 0:
            d = u >> 1
            if d >= m or d > layer or d == m - 1:
                return 3, pos, nid, L1, L2, postfix
            # close open internal nodes at depth >= d
            for lv in range(layer - 1, d - 1, -1):
                if desc[lv] < 2:
                    return 4, pos, nid, L1, L2, postfix
                if lv > 0:
                    desc[lv - 1] += desc[lv]
            desc[d] = 0
            path[d] = chunk
            layer = d + 1
            L1 += 1
            pos += 2
            prev_leaf = -1
        else:
            cnt = u >> 1
            if cnt == 0:
                return 5, pos, nid, L1, L2, postfix
            plen = m - layer - 1
            end = pos + 2 + plen + 4 * cnt
            if end > n:
                return 1, pos, nid, L1, L2, postfix
            for t in range(plen):
                if buf[pos + 2 + t] >= k:
                    return 2, pos, nid, L1, L2, postfix
            chained = False
            if prev_leaf >= 0 and buf[prev_leaf] == chunk:
                chained = True
                for t in range(plen):
                    if buf[prev_leaf + 2 + t] != buf[pos + 2 + t]:
                        chained = False
                        break
            if not chained and layer > 0:
                desc[layer - 1] += 1
            if nid + cnt > cap:
                return 6, pos, nid, L1, L2, postfix
            q = pos + 2 + plen
            for t in range(cnt):
                for s in range(layer):
                    codes[nid, s] = path[s]
                codes[nid, layer] = chunk
                for s in range(plen):
                    codes[nid, layer + 1 + s] = buf[pos + 2 + s]
                ids[nid] = (np.int64(buf[q]) | (np.int64(buf[q + 1]) << 8)
                            | (np.int64(buf[q + 2]) << 16) | (np.int64(buf[q + 3]) << 24))
                q += 4
                nid += 1
            L2 += 1
            postfix += plen
            prev_leaf = pos
            pos = end
    for lv in range(layer - 1, -1, -1):
        if desc[lv] < 2:
            return 4, pos, nid, L1, L2, postfix
        if lv > 0:
            desc[lv - 1] += desc[lv]
    return 0, pos, nid, L1, L2, postfix


_PARSE_ERRORS = {
    1: "truncated record",
    2: "chunk value out of range",
    3: "invalid internal depth",
    4: "internal node with fewer than two distinct codes below it",
    5: "leaf with zero ids",
    6: "more ids than the declared N",
}


def parse(buffer: np.ndarray, m: int, K: int = MAX_K, N: int | None = None):
    """Validate a tree buffer and list its leaves in buffer order.

    Returns:
        ``(codes, ids, (L1, L2, total_postfix))`` with one row per id.

    Raises:
        CorruptBufferError: On any layout violation.
    """
    buf = np.ascontiguousarray(buffer, dtype=np.uint8)
    if not 1 <= m <= MAX_DEPTH:
        raise ConfigError(f"config error: depth {m} outside [1, {MAX_DEPTH}]")
    cap = N if N is not None else buf.size // 4
    codes = np.empty((cap, m), dtype=np.uint8)
    ids = np.empty(cap, dtype=np.int64)
    status, off, nid, L1, L2, postfix = _parse(buf, m, K, codes, ids)
    if status:
        raise CorruptBufferError(f"corrupt buffer: {_PARSE_ERRORS[status]} at offset {off}")
    if N is not None and nid != N:
        raise CorruptBufferError(f"corrupt buffer: {nid} ids found, expected {N}")
    return codes[:nid], ids[:nid].astype(np.uint32), (L1, L2, postfix)


def enumerate_leaves(tree: ETree) -> EncodedDataset:
    """Leaf contents as a sorted dataset (the inverse of construction)."""
    codes, ids, _ = tree._parsed()
    idx = np.lexsort(codes.T[::-1])
    return EncodedDataset(codes[idx], ids[idx], tree.K)


def stats(tree: ETree) -> TreeStats:
    _, _, (L1, L2, postfix) = tree._parsed()
    return TreeStats(tree.N, tree.layer_count, L1, L2, postfix, tree.nbytes)


# --------------------------------------------------------------------------
# traversal


def _id_views(buf: np.ndarray):
    """Four uint32 views of the buffer starting at byte offsets 0..3.

    An id at byte offset ``q`` is element ``q >> 2`` of view ``q & 3``, so the
    scan reads each id with one unaligned 32-bit load.
    """
    views = []
    for s in range(4):
        n = max(0, (buf.size - s) // 4)
        views.append(buf[s:s + 4 * n].view("<u4"))
    return views


@njit(cache=True, nogil=True)
def _traverse(buf, w0, w1, w2, w3, table, out, slots):
    """Depth-first distance scan; returns the number of table lookups.

    ``ctx[l + 1]`` is the partial sum over layers ``0..l`` of the current path.
    """
    m = table.shape[0]
    n = buf.shape[0]
    ctx = np.zeros(m + 1, dtype=np.float64)
    dense = slots.shape[0] == 0
    layer = 0
    pos = 0
    seq = 0
    lookups = 0
    while pos < n:
        chunk = buf[pos]
        u = np.int64(buf[pos + 1])
        if u & 1:
            cnt = u >> 1
            d = ctx[layer] + table[layer, chunk]
            plen = m - layer - 1
            q = pos + 2
            for t in range(plen):
                d += table[layer + 1 + t, buf[q + t]]
            lookups += 1 + plen
            q += plen
            if dense:
                s = q & 3
                if s == 0:
                    w = w0
                elif s == 1:
                    w = w1
                elif s == 2:
                    w = w2
                else:
                    w = w3
                base = q >> 2
                for t in range(cnt):
                    out[w[base + t]] = d
            else:
                for t in range(cnt):
                    out[slots[seq + t]] = d
                seq += cnt
            pos = q + 4 * cnt
        else:
            lv = u >> 1
            ctx[lv + 1] = ctx[lv] + table[lv, chunk]
            lookups += 1
            layer = lv + 1
            pos += 2
    return lookups


def traverse_distances(tree: ETree, table: np.ndarray, out: np.ndarray | None = None,
                       layer_table: bool = False) -> np.ndarray:
    """Distances from a query (via its table) to every code in the tree.

    Args:
        tree: The tree to scan.
        table: ``(M, K)`` distance table in natural chunk order; pass
            ``layer_table=True`` if it is already this tree's
            ``(layer_count, K)`` slice in layer order.
        out: Optional preallocated float64 array of ``N`` slots.

    Returns:
        ``out`` where ``out[j]`` is the distance for the ``j``-th smallest id
        (equal to the id itself for ids ``0..N-1``).
    """
    t = _prepare_table(tree, table, layer_table)
    if out is None:
        out = np.empty(tree.N, dtype=np.float64)
    elif out.shape != (tree.N,) or out.dtype != np.float64:
        raise ConfigError("config error: out must be float64 with N slots")
    _traverse(tree.buffer, *tree._views(), t, out, tree._slots())
    return out


def count_lookups(tree: ETree, table: np.ndarray | None = None) -> int:
    """Run an instrumented traversal and return its table-lookup count."""
    if table is None:
        table = np.zeros((tree.layer_count, tree.K))
        layer_table = True
    else:
        layer_table = False
    t = _prepare_table(tree, table, layer_table)
    out = np.empty(tree.N, dtype=np.float64)
    return int(_traverse(tree.buffer, *tree._views(), t, out, tree._slots()))


def _prepare_table(tree: ETree, table, layer_table: bool) -> np.ndarray:
    if layer_table:
        t = np.ascontiguousarray(table, dtype=np.float64)
        if t.ndim != 2 or t.shape[0] != tree.layer_count or t.shape[1] < tree.K:
            raise ConfigError(f"config error: layer table shape {t.shape} does not match tree")
        return t
    return tree.layer_table(table)
