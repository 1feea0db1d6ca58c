"""Ground truth and recall."""

from __future__ import annotations

import numpy as np


def exact_knn(data, queries, k: int, block: int = 256) -> np.ndarray:
    """Brute-force ``k`` nearest rows of ``data`` per query (squared L2), int64 ids."""
    x = np.asarray(data, dtype=np.float64)
    q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    k = min(k, x.shape[0])
    xn = (x ** 2).sum(axis=1)
    out = np.empty((q.shape[0], k), dtype=np.int64)
    for s in range(0, q.shape[0], block):
        qb = q[s:s + block]
        d = xn[None, :] - 2.0 * qb @ x.T
        part = np.argpartition(d, k - 1, axis=1)[:, :k]
        pd = np.take_along_axis(d, part, axis=1)
        out[s:s + block] = np.take_along_axis(part, np.argsort(pd, axis=1, kind="stable"), axis=1)
    return out


def recall_at(result_ids, ground_truth, R: int) -> float:
    """Fraction of queries whose true nearest neighbour is in the first ``R`` results."""
    res = np.asarray(result_ids)
    gt = np.asarray(ground_truth)
    if res.shape[0] == 0:
        return 0.0
    hits = (res[:, :R] == gt[:, :1]).any(axis=1)
    return float(hits.mean())


def recall_k_at_k(result_ids, ground_truth, k: int) -> float:
    """Mean overlap between the first ``k`` results and the true ``k`` neighbours."""
    res = np.asarray(result_ids)[:, :k]
    gt = np.asarray(ground_truth)[:, :k]
    if res.shape[0] == 0:
        return 0.0
    hits = (res[:, :, None] == gt[:, None, :]).any(axis=2)
    return float(hits.sum(axis=1).mean()) / k
