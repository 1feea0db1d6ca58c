"""Product quantization: codebook training, encoding, distance tables, ADC.

A vector of dimension ``d`` is split into ``M`` contiguous subvectors of
``d // M`` dimensions each, and every subvector is replaced by the index of
its nearest codeword in a per-subspace codebook of ``K <= 256`` entries.

Distances are squared Euclidean everywhere.  Because the subspaces are
orthogonal, the squared distance between a query and a decoded vector is the
sum of the per-subspace squared distances, which is what the lookup table
stores.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import (
    ConfigError,
    DimensionError,
    InsufficientDataError,
    InvalidCodeError,
    InvalidSubspaceSplit,
    InvalidVectorError,
)

MAX_K = 256


@dataclass(frozen=True, eq=False)
class Codebook:
    """``M`` sub-codebooks of ``K`` codewords, stored as ``(M, K, d // M)`` float32."""

    centroids: np.ndarray

    def __post_init__(self):
        c = np.ascontiguousarray(self.centroids, dtype=np.float32)
        if c.ndim != 3 or c.shape[0] < 1 or c.shape[1] < 1 or c.shape[2] < 1:
            raise ConfigError(f"centroids must have shape (M, K, dsub), got {c.shape}")
        if c.shape[1] > MAX_K:
            raise ConfigError(f"K={c.shape[1]} exceeds {MAX_K}")
        if not np.all(np.isfinite(c)):
            raise InvalidVectorError("codebook contains non-finite values")
        c.setflags(write=False)
        object.__setattr__(self, "centroids", c)

    @property
    def M(self) -> int:
        return self.centroids.shape[0]

    @property
    def K(self) -> int:
        return self.centroids.shape[1]

    @property
    def dsub(self) -> int:
        return self.centroids.shape[2]

    @property
    def d(self) -> int:
        return self.M * self.dsub

    def __eq__(self, other):
        if not isinstance(other, Codebook):
            return NotImplemented
        return np.array_equal(self.centroids, other.centroids)


@dataclass(frozen=True, eq=False)
class EncodedDataset:
    """``N`` codes of ``M`` one-byte chunks, each paired with a uint32 id."""

    codes: np.ndarray
    ids: np.ndarray
    K: int = MAX_K

    def __post_init__(self):
        codes = np.ascontiguousarray(self.codes, dtype=np.uint8)
        if codes.ndim != 2:
            raise ConfigError(f"codes must be 2-D, got shape {codes.shape}")
        ids = np.ascontiguousarray(self.ids)
        if ids.ndim != 1 or ids.shape[0] != codes.shape[0]:
            raise ConfigError("ids must be 1-D with one entry per code")
        if ids.size and (ids.min() < 0 or ids.max() > np.iinfo(np.uint32).max):
            raise ConfigError("ids must fit in 32 unsigned bits")
        ids = ids.astype(np.uint32, copy=False)
        if not 1 <= self.K <= MAX_K:
            raise ConfigError(f"K must be in [1, {MAX_K}], got {self.K}")
        if codes.size and int(codes.max()) >= self.K:
            raise InvalidCodeError(f"code chunk {int(codes.max())} >= K={self.K}")
        if np.unique(ids).size != ids.size:
            raise ConfigError("ids must be unique")
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "ids", ids)

    @classmethod
    def from_codes(cls, codes, K: int = MAX_K, ids=None) -> "EncodedDataset":
        codes = np.asarray(codes)
        if ids is None:
            ids = np.arange(codes.shape[0], dtype=np.uint32)
        return cls(codes, ids, K)

    @property
    def N(self) -> int:
        return self.codes.shape[0]

    @property
    def M(self) -> int:
        return self.codes.shape[1]

    def __len__(self):
        return self.N

    def __eq__(self, other):
        if not isinstance(other, EncodedDataset):
            return NotImplemented
        return (
            self.K == other.K
            and np.array_equal(self.codes, other.codes)
            and np.array_equal(self.ids, other.ids)
        )


# --------------------------------------------------------------------------
# kernels


@njit(cache=True)
def _assign(x, centroids, labels, dists):
    """Nearest centroid per row; ties go to the smallest index."""
    n, ds = x.shape
    k = centroids.shape[0]
    for i in range(n):
        best = np.inf
        arg = 0
        for j in range(k):
            s = 0.0
            for t in range(ds):
                diff = x[i, t] - centroids[j, t]
                s += diff * diff
            if s < best:
                best = s
                arg = j
        labels[i] = arg
        dists[i] = best


@njit(cache=True, nogil=True)
def _adc_scan(table, codes, out):
    n, m = codes.shape
    for i in range(n):
        s = 0.0
        for j in range(m):
            s += table[j, codes[i, j]]
        out[i] = s


# --------------------------------------------------------------------------
# training


def _as_vectors(data, name="data") -> np.ndarray:
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"{name} must be a 2-D array of vectors, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidVectorError(f"{name} contains NaN or Inf")
    return x


def kmeans(x, K: int, iterations: int, rng: np.random.Generator):
    """Lloyd's k-means on the rows of ``x``.

    Initial centroids are ``K`` distinct rows drawn uniformly.  A cluster that
    ends up empty is re-seeded at the point farthest from its current centroid.

    Returns:
        (centroids, labels, objective) where ``objective[t]`` is the sum of
        squared distances right after the assignment step of iteration ``t``.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < K:
        raise InsufficientDataError(f"insufficient data: N={n} < K={K}")
    if iterations < 1:
        raise ConfigError("iterations must be >= 1")

    centroids = x[np.sort(rng.choice(n, size=K, replace=False))].copy()
    labels = np.empty(n, dtype=np.int64)
    dists = np.empty(n, dtype=np.float64)
    objective = []
    prev = None
    for _ in range(iterations):
        _assign(x, centroids, labels, dists)
        objective.append(float(dists.sum()))
        if prev is not None and np.array_equal(prev, labels):
            break
        prev = labels.copy()

        counts = np.bincount(labels, minlength=K)
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, x)
        live = counts > 0
        centroids[live] = sums[live] / counts[live, None]

        empty = np.flatnonzero(~live)
        if empty.size:
            far = np.argsort(-dists, kind="stable")[: empty.size]
            centroids[empty] = x[far]
    return centroids, labels, objective


def train_pq(data, M: int, K: int = MAX_K, iterations: int = 25, seed: int = 0,
             return_history: bool = False):
    """Learn a product-quantization codebook with per-subspace k-means.

    Args:
        data: Training vectors, shape ``(N, d)``.
        M: Number of subspaces; must divide ``d``.
        K: Codewords per subspace, at most 256.
        iterations: Maximum Lloyd iterations per subspace.
        seed: Seed for centroid initialization.
        return_history: Also return the per-subspace objective traces.

    Returns:
        A :class:`Codebook`, or ``(codebook, histories)`` when ``return_history``.
    """
    x = _as_vectors(data)
    n, d = x.shape
    if M < 1 or d % M:
        raise InvalidSubspaceSplit(f"invalid subspace split: d={d} is not divisible by M={M}")
    if not 1 <= K <= MAX_K:
        raise ConfigError(f"K must be in [1, {MAX_K}], got {K}")
    if n < K:
        raise InsufficientDataError(f"insufficient data: N={n} < K={K}")
    ds = d // M
    rng = np.random.default_rng(seed)
    cents = np.empty((M, K, ds), dtype=np.float64)
    histories = []
    for m in range(M):
        cents[m], _, hist = kmeans(x[:, m * ds:(m + 1) * ds], K, iterations, rng)
        histories.append(hist)
    cb = Codebook(cents.astype(np.float32))
    return (cb, histories) if return_history else cb


def quantization_error(codebook: Codebook, data) -> float:
    """Sum of squared reconstruction errors over ``data``."""
    x = _as_vectors(data)
    rec = decode(codebook, encode(codebook, x))
    return float(((x - rec) ** 2).sum())


# --------------------------------------------------------------------------
# encode / decode


def _check_dim(codebook: Codebook, x: np.ndarray):
    if x.shape[-1] != codebook.d:
        raise DimensionError(f"dimension error: expected d={codebook.d}, got {x.shape[-1]}")


def encode(codebook: Codebook, v) -> np.ndarray:
    """Encode one vector ``(d,)`` or a batch ``(n, d)`` into uint8 codes."""
    x = np.asarray(v, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    _check_dim(codebook, x)
    if not np.all(np.isfinite(x)):
        raise InvalidVectorError("vector contains NaN or Inf")
    n = x.shape[0]
    ds = codebook.dsub
    codes = np.empty((n, codebook.M), dtype=np.uint8)
    labels = np.empty(n, dtype=np.int64)
    dists = np.empty(n, dtype=np.float64)
    cents = codebook.centroids.astype(np.float64)
    for m in range(codebook.M):
        _assign(np.ascontiguousarray(x[:, m * ds:(m + 1) * ds]), cents[m], labels, dists)
        codes[:, m] = labels
    return codes[0] if single else codes


def _check_codes(codebook: Codebook, c: np.ndarray):
    if c.shape[-1] != codebook.M:
        raise InvalidCodeError(f"invalid code: expected {codebook.M} chunks, got {c.shape[-1]}")
    if c.size and (c.min() < 0 or c.max() >= codebook.K):
        raise InvalidCodeError(f"invalid code: chunk out of range [0, {codebook.K})")


def decode(codebook: Codebook, c) -> np.ndarray:
    """Concatenate the selected codewords; accepts ``(M,)`` or ``(n, M)``."""
    c = np.asarray(c)
    _check_codes(codebook, c)
    c = c.astype(np.intp)
    parts = codebook.centroids[np.arange(codebook.M), c]  # (..., M, dsub)
    return parts.reshape(*c.shape[:-1], codebook.d)


# --------------------------------------------------------------------------
# distance tables and ADC


def build_distance_table(codebook: Codebook, q) -> np.ndarray:
    """Per-query ``(M, K)`` float64 table of squared subvector-to-codeword distances."""
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 1:
        raise DimensionError("query must be a single vector")
    _check_dim(codebook, q)
    if not np.all(np.isfinite(q)):
        raise InvalidVectorError("query contains NaN or Inf")
    qs = q.reshape(codebook.M, 1, codebook.dsub)
    diff = qs - codebook.centroids.astype(np.float64)
    return np.ascontiguousarray(np.einsum("mkt,mkt->mk", diff, diff))


def adc_distance(table: np.ndarray, c) -> float:
    """Sum of ``table[m, c[m]]``, accumulated left to right in float64."""
    c = np.asarray(c)
    if c.ndim != 1 or c.shape[0] != table.shape[0]:
        raise InvalidCodeError("invalid code: chunk count does not match table")
    if c.size and (c.min() < 0 or c.max() >= table.shape[1]):
        raise InvalidCodeError("invalid code: chunk out of range")
    s = 0.0
    for m, k in enumerate(c.tolist()):
        s += float(table[m, k])
    return s


def adc_scan(table: np.ndarray, ds: EncodedDataset, out: np.ndarray | None = None) -> np.ndarray:
    """Naive exhaustive ADC: ``out[i] = adc_distance(table, ds.codes[i])``."""
    table = np.ascontiguousarray(table, dtype=np.float64)
    if table.ndim != 2 or table.shape[0] != ds.M or table.shape[1] < ds.K:
        raise ConfigError(f"config error: table shape {table.shape} does not match M={ds.M}, K={ds.K}")
    if out is None:
        out = np.empty(ds.N, dtype=np.float64)
    _adc_scan(table, ds.codes, out)
    return out
