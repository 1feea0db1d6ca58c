"""
Product quantization and table-lookup distances
===============================================

Train a small codebook, compress vectors to 8 bytes each and estimate
distances to an uncompressed query with an M x K lookup table.
"""

import numpy as np

from encodingtree import (EncodedDataset, SyntheticSpec, adc_scan, build_distance_table,
                          decode, encode, gen_synthetic, quantization_error, train_pq)

# 20k points in 32 dimensions, grouped around 500 centres
x = gen_synthetic(SyntheticSpec(N=20_000, d=32, cluster_count=500, cluster_stddev=0.1, seed=0))

# 8 subspaces of 4 dimensions, 256 codewords each
codebook, history = train_pq(x[:5000], M=8, K=256, iterations=10, seed=0, return_history=True)
print("objective per iteration, subspace 0:", np.round(history[0], 2))
print(f"mean squared reconstruction error: {quantization_error(codebook, x) / len(x):.4f}")

codes = encode(codebook, x)
print("first code:", codes[0], "->", decode(codebook, codes[0])[:4], "...")

# one table per query; the distance to a code is a sum of M table entries
q = x[123] + 0.05
table = build_distance_table(codebook, q)
ds = EncodedDataset.from_codes(codes)
approx = adc_scan(table, ds)
exact = ((x.astype(np.float64) - q) ** 2).sum(axis=1)

print("nearest by table lookup:", np.argsort(approx)[:5])
print("nearest exactly:        ", np.argsort(exact)[:5])
