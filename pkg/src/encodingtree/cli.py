"""Command line entry point: ``encodingtree <command> ...``."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import formats
from .bench import bench_scan
from .eforest import ForestConfig, build_forest, forest_distances
from .errors import EncodingTreeError
from .etree import ChunkOrder, build_tree
from .ivf import CoarseQuantizer, build_ivf, index_from_codes, ivf_search
from .metrics import recall_at
from .quantizer import EncodedDataset, build_distance_table, encode, train_pq
from .synthetic import SyntheticSpec, gen_synthetic
from .vecs import read_ivecs, read_vectors, write_vectors


def _order(name: str, M: int, seed: int) -> ChunkOrder:
    return ChunkOrder.identity(M) if name == "original" else ChunkOrder.randomized(M, seed)


def cmd_gen(a):
    x = gen_synthetic(SyntheticSpec(a.n, a.d, a.clusters, a.stddev, a.seed))
    write_vectors(a.out, x, "fvecs")
    print(f"wrote {x.shape[0]} vectors of d={x.shape[1]} to {a.out}")


def cmd_train(a):
    x = read_vectors(a.input)
    if a.train_size and a.train_size < x.shape[0]:
        rng = np.random.default_rng(a.seed)
        x = x[np.sort(rng.choice(x.shape[0], a.train_size, replace=False))]
    cb = train_pq(x, a.M, a.K, a.iterations, a.seed)
    formats.save_codebook(a.out, cb)
    print(f"codebook d={cb.d} M={cb.M} K={cb.K} -> {a.out}")


def cmd_encode(a):
    cb = formats.load_codebook(a.codebook)
    codes = encode(cb, read_vectors(a.input))
    ds = EncodedDataset.from_codes(np.atleast_2d(codes), cb.K)
    formats.save_codes(a.out, ds)
    print(f"encoded {ds.N} vectors -> {a.out}")


def cmd_build_tree(a):
    ds = formats.load_codes(a.codes)
    order = _order(a.order, ds.M, a.seed)
    if a.trees == 1:
        tree = build_tree(ds, order)
    else:
        tree = build_forest(ds, order, ForestConfig.even(ds.M, a.trees))
    formats.save_tree(a.out, tree)
    print(f"built {a.trees} tree(s) over {ds.N} codes -> {a.out}")


def cmd_stats(a):
    forest = formats.load_tree(a.tree)
    for t, s in enumerate(forest.stats()):
        print(f"tree={t} layers={forest.trees[t].layer_offset}:"
              f"{forest.trees[t].layer_offset + forest.trees[t].layer_count} "
              f"L1={s.L1} L2={s.L2} P={s.avg_postfix:.4f} N'={s.n_prime} "
              f"memory_bytes={s.memory_bytes} buffer_bytes={s.buffer_bytes} "
              f"formula={'ok' if s.formula_ok else 'MISMATCH'}")
    print(f"total_memory_bytes={forest.nbytes} flat_bytes={forest.N * (forest.M + 4)}")


def cmd_query(a):
    forest = formats.load_tree(a.tree)
    cb = formats.load_codebook(a.codebook)
    q = read_vectors(a.queries)
    k = min(a.k, forest.N)
    ids_sorted = np.sort(forest.trees[0]._parsed()[1])
    out_ids = np.empty((q.shape[0], k), dtype=np.int32)
    out_d = np.empty((q.shape[0], k), dtype=np.float32)
    for i, v in enumerate(q):
        d = forest_distances(forest, build_distance_table(cb, v), workers=a.threads)
        top = np.lexsort((ids_sorted, d))[:k]
        out_ids[i] = ids_sorted[top]
        out_d[i] = d[top]
    base = a.out[:-6] if a.out.endswith((".ivecs", ".fvecs")) else a.out
    write_vectors(base + ".ivecs", out_ids, "ivecs")
    write_vectors(base + ".fvecs", out_d, "fvecs")
    print(f"top-{k} for {q.shape[0]} queries -> {base}.ivecs / {base}.fvecs")


def cmd_bench(a):
    ds = formats.load_codes(a.codes)
    cb = formats.load_codebook(a.codebook)
    q = read_vectors(a.queries)[: a.num_queries]
    rep = bench_scan(ds, cb, q, repetitions=a.repetitions, order=_order(a.order, ds.M, a.seed),
                     trees=a.trees, storage=a.storage, workers=a.threads)
    print(rep.text())
    print("\n".join(rep.records()))


def cmd_ivf_build(a):
    x = read_vectors(a.input)
    index = build_ivf(x, a.kprime, a.M, a.K, a.iterations, a.seed, a.trees, a.train_size)
    os.makedirs(a.out, exist_ok=True)
    write_vectors(os.path.join(a.out, "coarse.fvecs"), index.coarse.centroids, "fvecs")
    formats.save_codebook(os.path.join(a.out, "codebook.etcb"), index.codebook)
    ids = np.concatenate([lst.data.ids for lst in index.lists])
    codes = np.concatenate([lst.data.codes for lst in index.lists])
    labels = np.repeat(np.arange(len(index.lists)), [lst.size for lst in index.lists])
    formats.save_codes(os.path.join(a.out, "codes.etcd"), EncodedDataset(codes, ids, index.codebook.K))
    write_vectors(os.path.join(a.out, "labels.ivecs"), labels.reshape(-1, 1), "ivecs")
    with open(os.path.join(a.out, "meta.json"), "w") as f:
        json.dump({"kprime": a.kprime, "trees": a.trees, "N": int(ids.size)}, f)
    print(f"ivf index K'={a.kprime} N={ids.size} tree_bytes={index.tree_bytes} "
          f"flat_bytes={index.flat_bytes} -> {a.out}")


def _load_ivf(path):
    with open(os.path.join(path, "meta.json")) as f:
        meta = json.load(f)
    coarse = CoarseQuantizer(read_vectors(os.path.join(path, "coarse.fvecs")))
    cb = formats.load_codebook(os.path.join(path, "codebook.etcb"))
    ds = formats.load_codes(os.path.join(path, "codes.etcd"))
    labels = read_ivecs(os.path.join(path, "labels.ivecs"))[:, 0].astype(np.int64)
    return index_from_codes(coarse, cb, ds.codes, labels, meta["trees"], ds.ids)


def cmd_ivf_search(a):
    index = _load_ivf(a.index)
    q = read_vectors(a.queries)
    timings = {}
    res = np.full((q.shape[0], a.k), -1, dtype=np.int64)
    t0 = time.perf_counter()
    for i, v in enumerate(q):
        r = ivf_search(index, v, a.w, a.k, a.method, timings)
        res[i, :len(r)] = r.ids
    total = time.perf_counter() - t0
    if a.out:
        write_vectors(a.out, res.astype(np.int32), "ivecs")
    if a.report:
        nq = max(1, q.shape[0])
        print(f"queries={q.shape[0]} w={a.w} k={a.k} method={a.method}")
        if a.ground_truth:
            gt = read_ivecs(a.ground_truth)
            for R in (1, 10, 100):
                if R <= a.k:
                    print(f"recall@{R}={recall_at(res, gt, R):.4f}")
        print(f"mean_query_ms={total / nq * 1e3:.4f}")
        for phase in ("coarse", "table", "traversal", "merge"):
            print(f"{phase}_ms={timings.get(phase, 0.0) / nq * 1e3:.4f}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)

    p = argparse.ArgumentParser(prog="encodingtree", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen", parents=[common], help="generate clustered synthetic vectors")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--clusters", type=int, default=1)
    s.add_argument("--stddev", type=float, default=1.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("train", parents=[common], help="train a PQ codebook")
    s.add_argument("--input", required=True)
    s.add_argument("--M", type=int, required=True)
    s.add_argument("--K", type=int, default=256)
    s.add_argument("--iterations", type=int, default=25)
    s.add_argument("--train-size", type=int, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("encode", parents=[common], help="encode vectors into a codes file")
    s.add_argument("--codebook", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_encode)

    s = sub.add_parser("build-tree", parents=[common], help="build an E-Tree or E-Forest")
    s.add_argument("--codes", required=True)
    s.add_argument("--order", choices=("original", "random"), default="original")
    s.add_argument("--trees", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_build_tree)

    s = sub.add_parser("stats", parents=[common], help="print tree statistics")
    s.add_argument("--tree", required=True)
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("query", parents=[common], help="exhaustive top-k through a tree file")
    s.add_argument("--tree", required=True)
    s.add_argument("--codebook", required=True)
    s.add_argument("--queries", required=True)
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_query)

    s = sub.add_parser("bench", parents=[common], help="ADC vs E-Tree vs E-Forest scan timing")
    s.add_argument("--codes", required=True)
    s.add_argument("--codebook", required=True)
    s.add_argument("--queries", required=True)
    s.add_argument("--num-queries", type=int, default=10)
    s.add_argument("--repetitions", type=int, default=10)
    s.add_argument("--trees", type=int, default=2)
    s.add_argument("--order", choices=("original", "random"), default="original")
    s.add_argument("--storage", choices=("sorted", "original"), default="sorted")
    s.set_defaults(func=cmd_bench)

    ivf = sub.add_parser("ivf", help="IVFADC index with per-list trees")
    isub = ivf.add_subparsers(dest="ivf_command", required=True)
    s = isub.add_parser("build", parents=[common])
    s.add_argument("--input", required=True)
    s.add_argument("--kprime", type=int, required=True)
    s.add_argument("--M", type=int, required=True)
    s.add_argument("--K", type=int, default=256)
    s.add_argument("--trees", type=int, default=1)
    s.add_argument("--iterations", type=int, default=20)
    s.add_argument("--train-size", type=int, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ivf_build)
    s = isub.add_parser("search", parents=[common])
    s.add_argument("--index", required=True)
    s.add_argument("--queries", required=True)
    s.add_argument("--w", type=int, default=8)
    s.add_argument("--k", type=int, default=100)
    s.add_argument("--method", choices=("tree", "adc"), default="tree")
    s.add_argument("--ground-truth", default=None)
    s.add_argument("--out", default=None)
    s.add_argument("--report", action="store_true")
    s.set_defaults(func=cmd_ivf_search)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except EncodingTreeError as e:
        print(f"error={e.code} message={json.dumps(str(e))}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error=io_error message={json.dumps(str(e))}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
