"""Encoding Forest: one tree per contiguous range of chunk layers.

Each tree yields a partial distance per vector; the final distance is the
elementwise sum of the partial arrays.  Every tree stores all ``N`` ids
again, so memory grows by about ``4N`` bytes per extra tree.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .etree import ChunkOrder, ETree, TreeStats, construct, sort_encodings, stats, traverse_distances
from .etree import count_lookups as _tree_lookups
from .quantizer import EncodedDataset

MIN_RECOMMENDED_LAYERS = 4


class ShortSplitWarning(UserWarning):
    """A forest split covers fewer layers than is worthwhile for speed."""


@dataclass(frozen=True)
class ForestConfig:
    """Contiguous ``[start, stop)`` layer ranges that partition ``[0, M)``."""

    splits: tuple

    def __post_init__(self):
        splits = tuple((int(a), int(b)) for a, b in self.splits)
        if not splits:
            raise ConfigError("config error: forest needs at least one split")
        expect = 0
        for a, b in splits:
            if a != expect or b <= a:
                raise ConfigError(f"config error: splits {splits} are not contiguous non-empty ranges")
            expect = b
        object.__setattr__(self, "splits", splits)
        if any(b - a < MIN_RECOMMENDED_LAYERS for a, b in splits) and len(splits) > 1:
            warnings.warn(
                f"forest split {splits} has a tree with fewer than {MIN_RECOMMENDED_LAYERS} layers",
                ShortSplitWarning, stacklevel=3)

    @classmethod
    def even(cls, M: int, T: int = 2) -> "ForestConfig":
        """``T`` near-equal contiguous ranges; earlier ranges take the remainder."""
        if not 1 <= T <= M:
            raise ConfigError(f"config error: T={T} must be in [1, M={M}]")
        sizes = [M // T + (1 if t < M % T else 0) for t in range(T)]
        bounds = np.concatenate([[0], np.cumsum(sizes)])
        return cls(tuple(zip(bounds[:-1].tolist(), bounds[1:].tolist())))

    @property
    def T(self) -> int:
        return len(self.splits)

    @property
    def M(self) -> int:
        return self.splits[-1][1]


@dataclass(frozen=True, eq=False)
class EForest:
    trees: tuple
    N: int
    M: int
    K: int
    chunk_order: ChunkOrder
    _partials: list = field(default_factory=list, repr=False)

    @property
    def T(self) -> int:
        return len(self.trees)

    @property
    def nbytes(self) -> int:
        return sum(t.nbytes for t in self.trees)

    def stats(self) -> list[TreeStats]:
        return [stats(t) for t in self.trees]

    def partial_arrays(self) -> list[np.ndarray]:
        """Per-tree output arrays, allocated on first use and reused."""
        if not self._partials:
            self._partials.extend(np.empty(self.N, dtype=np.float64) for _ in self.trees)
        return self._partials

    def __eq__(self, other):
        if not isinstance(other, EForest):
            return NotImplemented
        return self.T == other.T and all(a == b for a, b in zip(self.trees, other.trees))


def build_forest(ds: EncodedDataset, order: ChunkOrder | None = None,
                 cfg: ForestConfig | None = None) -> EForest:
    """Build one tree per layer range of the chunk-permuted codes.

    Defaults: identity order and two trees splitting the layers in half.
    """
    if order is None:
        order = ChunkOrder.identity(ds.M)
    if order.M != ds.M:
        raise ConfigError(f"config error: order has {order.M} chunks, dataset has {ds.M}")
    if cfg is None:
        cfg = ForestConfig.even(ds.M, min(2, ds.M))
    if cfg.M != ds.M:
        raise ConfigError(f"config error: splits cover {cfg.M} layers, dataset has M={ds.M}")
    codes = ds.codes[:, order.permutation]
    trees = []
    for a, b in cfg.splits:
        part = EncodedDataset(np.ascontiguousarray(codes[:, a:b]), ds.ids, ds.K)
        trees.append(construct(sort_encodings(part), order, layer_offset=a, M=ds.M))
    return EForest(tuple(trees), ds.N, ds.M, ds.K, order)


def forest_distances(forest: EForest, table: np.ndarray, out: np.ndarray | None = None,
                     workers: int = 1) -> np.ndarray:
    """Sum of per-tree partial distances for every vector slot.

    Args:
        forest: The forest to scan.
        table: Natural-order ``(M, K)`` distance table.
        out: Optional float64 output of ``N`` slots.
        workers: Trees traversed concurrently (kernels release the GIL).
    """
    table = np.asarray(table, dtype=np.float64)
    if table.shape[0] != forest.M or table.shape[1] < forest.K:
        raise ConfigError(f"config error: table shape {table.shape} does not match M={forest.M}, K={forest.K}")
    if out is None:
        out = np.empty(forest.N, dtype=np.float64)
    partials = forest.partial_arrays()
    if forest.T == 1:
        return traverse_distances(forest.trees[0], table, out)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(lambda tp: traverse_distances(tp[0], table, tp[1]),
                          zip(forest.trees, partials)))
    else:
        for tree, p in zip(forest.trees, partials):
            traverse_distances(tree, table, p)
    np.add(partials[0], partials[1], out=out)
    for p in partials[2:]:
        out += p
    return out


def count_lookups(forest: EForest) -> int:
    return sum(_tree_lookups(t) for t in forest.trees)


def single_tree(tree: ETree) -> EForest:
    """Wrap a stand-alone tree as a one-tree forest."""
    return EForest((tree,), tree.N, tree.M, tree.K, tree.chunk_order)
