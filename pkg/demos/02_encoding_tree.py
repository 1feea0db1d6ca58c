"""
Sharing prefixes with an Encoding Tree
======================================

Codes that start with the same chunks share their partial distance.  The
tree stores each shared prefix once in a flat byte buffer and a depth-first
walk adds every table entry exactly once per node.
"""

import time

import numpy as np

from encodingtree import (EncodedDataset, adc_scan, build_tree, enumerate_leaves, sort_encodings, stats,
                          traverse_distances)

# %% A four-code toy
# Three codes start with (1, 2); two of those continue with 3.
codes = np.array([[1, 2, 3, 4], [1, 2, 3, 5], [1, 2, 7, 7], [9, 9, 9, 9]])
tree = build_tree(EncodedDataset.from_codes(codes, K=16))
s = stats(tree)
print(f"internal={s.L1} leaves={s.L2} avg postfix={s.avg_postfix} bytes={tree.nbytes}")
print("buffer:", tree.buffer.tolist())

# the leaves give back exactly what went in
print(enumerate_leaves(tree).codes)

# %% Clustered codes at scale
rng = np.random.default_rng(1)
protos = rng.integers(0, 256, size=(2000, 8))
big = protos[rng.integers(0, 2000, 400_000)]
noise = rng.random(big.shape) < 0.05
big[noise] = rng.integers(0, 256, noise.sum())
# store the codes in sorted order so the tree writes its output sequentially
ds = sort_encodings(EncodedDataset.from_codes(big))
ds = EncodedDataset(ds.codes, np.arange(ds.N), ds.K)

tree = build_tree(ds)
s = stats(tree)
print(f"tree bytes {tree.nbytes:,} vs flat {ds.N * (ds.M + 4):,}; "
      f"lookups {s.lookups:,} vs {ds.N * ds.M:,}")

table = rng.random((8, 256))
assert np.array_equal(traverse_distances(tree, table), adc_scan(table, ds))

for name, fn in [("adc", lambda: adc_scan(table, ds)),
                 ("tree", lambda: traverse_distances(tree, table))]:
    fn()
    t0 = time.perf_counter()
    for _ in range(20):
        fn()
    print(f"{name:>5}: {(time.perf_counter() - t0) / 20 * 1e3:.2f} ms per scan")
