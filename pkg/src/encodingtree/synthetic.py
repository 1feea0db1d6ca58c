"""Clustered synthetic vectors with tunable prefix sharing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian blobs around standard-normal centers.

    Smaller ``cluster_stddev`` makes points of one cluster encode to the same
    or nearly the same code, which is what makes codes share prefixes.
    """

    N: int
    d: int
    cluster_count: int = 1
    cluster_stddev: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.N < 1 or self.d < 1 or self.cluster_count < 1:
            raise ConfigError("config error: N, d and cluster_count must be >= 1")
        if not self.cluster_stddev > 0:
            raise ConfigError("config error: cluster_stddev must be > 0")


def gen_synthetic(spec: SyntheticSpec) -> np.ndarray:
    """Draw ``spec.N`` float32 vectors; point order is random, not grouped by cluster."""
    rng = np.random.default_rng(spec.seed)
    centers = rng.standard_normal((spec.cluster_count, spec.d))
    labels = rng.integers(0, spec.cluster_count, size=spec.N)
    x = centers[labels]
    x += spec.cluster_stddev * rng.standard_normal((spec.N, spec.d))
    return x.astype(np.float32)
