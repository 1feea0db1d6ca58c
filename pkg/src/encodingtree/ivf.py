"""IVFADC search with per-list Encoding Trees.

A coarse k-means quantizer partitions the data into ``K'`` cells.  Each
vector's residual to its cell centroid is PQ-encoded with one codebook shared
by all cells.  At query time the ``w`` nearest cells are probed; for each,
a residual distance table is built and the cell's tree (or forest) is
scanned.  Setting ``method="adc"`` scans the cell's flat codes instead,
which must give the same candidates.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from numba import njit

from .eforest import EForest, ForestConfig, build_forest, forest_distances
from .errors import ConfigError, InsufficientDataError
from .etree import ETree, build_tree, traverse_distances
from .quantizer import (
    Codebook,
    EncodedDataset,
    _as_vectors,
    _assign,
    adc_scan,
    build_distance_table,
    encode,
    kmeans,
    train_pq,
)


@dataclass(frozen=True, eq=False)
class CoarseQuantizer:
    centroids: np.ndarray  # (K', d) float32

    @property
    def kprime(self) -> int:
        return self.centroids.shape[0]

    def assign(self, x) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=np.float64)
        labels = np.empty(x.shape[0], dtype=np.int64)
        dists = np.empty(x.shape[0], dtype=np.float64)
        _assign(x, self.centroids.astype(np.float64), labels, dists)
        return labels


@dataclass(eq=False)
class InvertedList:
    data: EncodedDataset          # ids ascending, residual codes
    tree: ETree | EForest | None  # None for an empty list

    @property
    def size(self) -> int:
        return self.data.N


@dataclass(eq=False)
class InvertedIndex:
    coarse: CoarseQuantizer
    codebook: Codebook
    lists: list
    trees_per_list: int = 1

    @property
    def N(self) -> int:
        return sum(lst.size for lst in self.lists)

    @property
    def tree_bytes(self) -> int:
        return sum(lst.tree.nbytes for lst in self.lists if lst.tree is not None)

    @property
    def flat_bytes(self) -> int:
        return self.N * (self.codebook.M + 4)


@dataclass(frozen=True)
class QueryResult:
    ids: np.ndarray        # uint32, ascending by (distance, id)
    distances: np.ndarray  # float64

    def __len__(self):
        return self.ids.size


# --------------------------------------------------------------------------
# bounded top-k


@njit(cache=True)
def _worse(d1, i1, d2, i2):
    return d1 > d2 or (d1 == d2 and i1 > i2)


@njit(cache=True)
def _heap_push_many(hd, hi, size, dists, ids):
    """Push candidates into a max-heap of the ``k`` best ``(distance, id)`` pairs."""
    k = hd.shape[0]
    for c in range(dists.shape[0]):
        d = dists[c]
        i = np.int64(ids[c])
        if size < k:
            j = size
            size += 1
            while j > 0:
                parent = (j - 1) >> 1
                if _worse(d, i, hd[parent], hi[parent]):
                    hd[j] = hd[parent]
                    hi[j] = hi[parent]
                    j = parent
                else:
                    break
            hd[j] = d
            hi[j] = i
        elif _worse(hd[0], hi[0], d, i):
            j = 0
            while True:
                left = 2 * j + 1
                if left >= size:
                    break
                child = left
                if left + 1 < size and _worse(hd[left + 1], hi[left + 1], hd[left], hi[left]):
                    child = left + 1
                if _worse(hd[child], hi[child], d, i):
                    hd[j] = hd[child]
                    hi[j] = hi[child]
                    j = child
                else:
                    break
            hd[j] = d
            hi[j] = i
    return size


class TopK:
    """Streaming top-``k`` by ascending distance, ties broken by smaller id."""

    def __init__(self, k: int):
        if k < 1:
            raise ConfigError("config error: k must be >= 1")
        self._d = np.empty(k, dtype=np.float64)
        self._i = np.empty(k, dtype=np.int64)
        self._size = 0

    def push(self, dists: np.ndarray, ids: np.ndarray):
        self._size = _heap_push_many(self._d, self._i, self._size,
                                     np.ascontiguousarray(dists, dtype=np.float64),
                                     np.ascontiguousarray(ids))

    def result(self) -> QueryResult:
        d = self._d[:self._size]
        i = self._i[:self._size]
        order = np.lexsort((i, d))
        return QueryResult(i[order].astype(np.uint32), d[order].copy())


# --------------------------------------------------------------------------
# build / search


def _make_tree(data: EncodedDataset, T: int):
    if data.N == 0:
        return None
    if T == 1:
        return build_tree(data)
    return build_forest(data, cfg=ForestConfig.even(data.M, min(T, data.M)))


def build_ivf(data, kprime: int, M: int, K: int = 256, iterations: int = 20, seed: int = 0,
              trees_per_list: int = 1, train_size: int | None = None) -> InvertedIndex:
    """Train the coarse and residual quantizers and build per-list trees.

    Args:
        data: Database vectors ``(N, d)``; vector ids are row positions.
        kprime: Number of coarse cells.
        M, K: Residual PQ shape.
        iterations: Lloyd iterations for both quantizers.
        seed: Seed for both quantizers.
        trees_per_list: 1 for an E-Tree per list, more for a forest.
        train_size: Optional cap on training rows (random subset, same seed).
    """
    x = _as_vectors(data)
    n = x.shape[0]
    if n < kprime:
        raise InsufficientDataError(f"insufficient data: N={n} < K'={kprime}")
    rng = np.random.default_rng(seed)
    train = x
    if train_size is not None and train_size < n:
        train = x[np.sort(rng.choice(n, size=train_size, replace=False))]
    cents, _, _ = kmeans(train, kprime, iterations, rng)
    coarse = CoarseQuantizer(cents.astype(np.float32))
    labels = coarse.assign(x)
    residuals = x - coarse.centroids.astype(np.float64)[labels]
    rtrain = residuals if train is x else residuals[np.sort(rng.choice(n, size=train_size, replace=False))]
    codebook = train_pq(rtrain, M, K, iterations, seed)
    codes = encode(codebook, residuals)
    return index_from_codes(coarse, codebook, codes, labels, trees_per_list)


def index_from_codes(coarse: CoarseQuantizer, codebook: Codebook, codes: np.ndarray,
                     labels: np.ndarray, trees_per_list: int = 1,
                     ids: np.ndarray | None = None) -> InvertedIndex:
    """Group residual codes by cell label and build each cell's tree."""
    if ids is None:
        ids = np.arange(codes.shape[0], dtype=np.uint32)
    order = np.lexsort((ids, labels))
    bounds = np.searchsorted(labels[order], np.arange(coarse.kprime + 1))
    lists = []
    for b in range(coarse.kprime):
        sel = order[bounds[b]:bounds[b + 1]]
        part = EncodedDataset(codes[sel], ids[sel], codebook.K)
        lists.append(InvertedList(part, _make_tree(part, trees_per_list)))
    return InvertedIndex(coarse, codebook, lists, trees_per_list)


def probe_order(index: InvertedIndex, q: np.ndarray) -> np.ndarray:
    """Cells by ascending squared distance to ``q``; ties by smaller cell index."""
    c = index.coarse.centroids.astype(np.float64)
    d = ((c - q) ** 2).sum(axis=1)
    return np.argsort(d, kind="stable")


def ivf_search(index: InvertedIndex, q, w: int, k: int, method: str = "tree",
               timings: dict | None = None) -> QueryResult:
    """Top-``k`` approximate neighbours of ``q`` from the ``w`` nearest cells.

    Args:
        method: ``"tree"`` scans each cell's tree/forest, ``"adc"`` its flat codes.
        timings: Optional dict; per-phase seconds are added under
            ``coarse``, ``table``, ``traversal`` and ``merge``.
    """
    q = np.asarray(q, dtype=np.float64)
    if not 1 <= w <= index.coarse.kprime:
        raise ConfigError(f"config error: w={w} outside [1, {index.coarse.kprime}]")
    if method not in ("tree", "adc"):
        raise ConfigError(f"config error: unknown method {method!r}")
    clock = time.perf_counter
    t0 = clock()
    probes = probe_order(index, q)[:w]
    t1 = clock()
    spent = {"coarse": t1 - t0, "table": 0.0, "traversal": 0.0, "merge": 0.0}
    top = TopK(k)
    cents = index.coarse.centroids.astype(np.float64)
    for b in probes:
        lst = index.lists[b]
        if lst.size == 0:
            continue
        ta = clock()
        table = build_distance_table(index.codebook, q - cents[b])
        tb = clock()
        if method == "adc":
            dists = adc_scan(table, lst.data)
        elif isinstance(lst.tree, EForest):
            dists = forest_distances(lst.tree, table)
        else:
            dists = traverse_distances(lst.tree, table)
        tc = clock()
        top.push(dists, lst.data.ids)
        td = clock()
        spent["table"] += tb - ta
        spent["traversal"] += tc - tb
        spent["merge"] += td - tc
    if timings is not None:
        for key, v in spent.items():
            timings[key] = timings.get(key, 0.0) + v
    return top.result()


def exhaustive_residual_adc(index: InvertedIndex, q, k: int) -> QueryResult:
    """Residual ADC over every cell, selected with a full sort (no heap)."""
    q = np.asarray(q, dtype=np.float64)
    cents = index.coarse.centroids.astype(np.float64)
    all_d, all_i = [], []
    for b, lst in enumerate(index.lists):
        if lst.size:
            all_d.append(adc_scan(build_distance_table(index.codebook, q - cents[b]), lst.data))
            all_i.append(lst.data.ids.astype(np.int64))
    d = np.concatenate(all_d)
    i = np.concatenate(all_i)
    order = np.lexsort((i, d))[:k]
    return QueryResult(i[order].astype(np.uint32), d[order])
