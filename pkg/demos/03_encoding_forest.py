"""
Splitting layers across an Encoding Forest
==========================================

Deep layers of a single tree rarely share anything.  A forest builds one
tree per range of chunk positions, so each tree sorts by its own chunks,
and sums the per-tree partial distances.
"""

import numpy as np

from encodingtree import (ChunkOrder, EncodedDataset, ForestConfig, adc_scan, build_forest,
                          build_tree, forest_distances, stats)

rng = np.random.default_rng(3)
# the first four chunks come from 300 patterns, the last four from 200 others
head = rng.integers(0, 256, (300, 4))[rng.integers(0, 300, 200_000)]
tail = rng.integers(0, 256, (200, 4))[rng.integers(0, 200, 200_000)]
ds = EncodedDataset.from_codes(np.hstack([head, tail]))

one = build_tree(ds)
forest = build_forest(ds, cfg=ForestConfig.even(8, 2))
print(f"single tree: {stats(one).lookups:,} lookups, {one.nbytes:,} bytes")
print(f"two trees:   {sum(s.lookups for s in forest.stats()):,} lookups, {forest.nbytes:,} bytes")

table = rng.random((8, 256))
np.testing.assert_allclose(forest_distances(forest, table), adc_scan(table, ds), atol=1e-9)

# chunk order is free: any permutation gives the same distances
shuffled = build_forest(ds, ChunkOrder.randomized(8, seed=0))
np.testing.assert_allclose(forest_distances(shuffled, table), adc_scan(table, ds), atol=1e-9)
print("forest distances match the flat scan")
