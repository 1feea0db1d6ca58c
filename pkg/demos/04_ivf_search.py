"""
Non-exhaustive search with an inverted file
===========================================

A coarse quantizer splits the database into cells and each cell keeps its
residual codes in a tree.  A query visits only its ``w`` nearest cells.
"""

import numpy as np

from encodingtree import (SyntheticSpec, build_ivf, exact_knn, gen_synthetic, ivf_search,
                          recall_at)

x = gen_synthetic(SyntheticSpec(50_000, 32, 1000, 0.1, seed=5))
rng = np.random.default_rng(5)
queries = x[rng.choice(len(x), 50, replace=False)] + rng.normal(0, 0.05, (50, 32))
gt = exact_knn(x, queries, 1)

index = build_ivf(x, kprime=64, M=8, K=256, iterations=10, seed=5, train_size=20_000)
print(f"tree bytes {index.tree_bytes:,} vs flat codes {index.flat_bytes:,}")

ivf_search(index, queries[0], 1, 100)   # compile the kernels before timing
for w in (1, 4, 16, 64):
    timings = {}
    res = np.stack([ivf_search(index, q, w, 100, timings=timings).ids for q in queries])
    same = all(np.array_equal(ivf_search(index, q, w, 100, "adc").ids, r)
               for q, r in zip(queries, res))
    per_q = {k: v / len(queries) * 1e3 for k, v in timings.items()}
    print(f"w={w:>2} recall@1={recall_at(res, gt, 1):.2f} recall@100={recall_at(res, gt, 100):.2f} "
          f"traversal {per_q['traversal']:.3f} ms  same ids as flat scan: {same}")
