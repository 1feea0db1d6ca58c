"""Scan benchmark: naive ADC vs. E-Tree vs. E-Forest on one encoded dataset.

Every method is checked against the ADC oracle before anything is timed.
Only the scan is timed; distance tables are built beforehand and shared.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .eforest import ForestConfig, build_forest, forest_distances
from .eforest import count_lookups as forest_lookups
from .errors import ConfigError, EquivalenceError
from .etree import ChunkOrder, build_tree, count_lookups, sort_encodings, stats, traverse_distances
from .quantizer import Codebook, EncodedDataset, adc_scan, build_distance_table

METHODS = ("adc", "etree", "eforest")
TOLERANCE = 1e-4


@dataclass
class MethodResult:
    seconds: float            # median over repetitions of the mean per-query scan time
    lookups: int
    memory_bytes: int
    samples: list = field(default_factory=list)


@dataclass
class BenchReport:
    dataset: dict
    methods: dict
    tree_stats: dict
    notes: list = field(default_factory=list)

    def speedup(self, method: str, baseline: str = "adc") -> float:
        return self.methods[baseline].seconds / self.methods[method].seconds

    def records(self) -> list[str]:
        """One ``key=value`` line per metric."""
        lines = [f"dataset.{k}={v}" for k, v in self.dataset.items()]
        for name, r in self.methods.items():
            lines += [
                f"{name}.seconds={r.seconds:.6g}",
                f"{name}.lookups={r.lookups}",
                f"{name}.memory_bytes={r.memory_bytes}",
            ]
            if name != "adc" and "adc" in self.methods:
                lines.append(f"{name}.speedup={self.speedup(name):.4f}")
        for name, sts in self.tree_stats.items():
            for t, s in enumerate(sts):
                lines += [f"{name}.tree{t}.{k}={v}" for k, v in s.as_dict().items()]
        return lines

    def text(self) -> str:
        d = self.dataset
        out = [f"N={d['N']} M={d['M']} K={d['K']} queries={d['queries']} "
               f"repetitions={d['repetitions']} storage={d['storage']}"]
        out.append(f"{'method':<9}{'ms/scan':>10}{'speedup':>9}{'lookups':>14}{'memory':>14}")
        for name, r in self.methods.items():
            sp = self.speedup(name) if "adc" in self.methods else float("nan")
            out.append(f"{name:<9}{r.seconds * 1e3:>10.3f}{sp:>9.2f}{r.lookups:>14}{r.memory_bytes:>14}")
        out += self.notes
        return "\n".join(out)


def stored_sorted(ds: EncodedDataset) -> tuple[EncodedDataset, np.ndarray]:
    """Sort the dataset in storage and renumber slots to storage positions.

    Returns the re-stored dataset (ids ``0..N-1``) and the original id of each slot.
    """
    s = sort_encodings(ds)
    return EncodedDataset(s.codes, np.arange(s.N, dtype=np.uint32), s.K), s.ids


def bench_scan(ds: EncodedDataset, codebook: Codebook, queries, methods=METHODS,
               repetitions: int = 10, order: ChunkOrder | None = None, trees: int = 2,
               storage: str = "sorted", workers: int = 1) -> BenchReport:
    """Time full-dataset scans for each method.

    Args:
        ds: Encoded database.
        codebook: Codebook the database was encoded with.
        queries: ``(nq, d)`` query vectors.
        methods: Subset of ``("adc", "etree", "eforest")``.
        repetitions: Timed repetitions after one warm-up pass.
        order: Chunk order for the trees.
        trees: Trees in the forest.
        storage: ``"sorted"`` stores codes in lexicographic order first (slot =
            storage position, shared by every method); ``"original"`` keeps
            the input order and ids.
        workers: Forest trees traversed concurrently.

    Raises:
        EquivalenceError: If a method's distances differ from ADC by more than 1e-4.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if queries.shape[0] < 1 or repetitions < 1:
        raise ConfigError("config error: need at least one query and one repetition")
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ConfigError(f"config error: unknown methods {sorted(unknown)}")
    if storage == "sorted":
        ds, _ = stored_sorted(ds)
    elif storage != "original":
        raise ConfigError(f"config error: storage must be 'sorted' or 'original', got {storage!r}")
    order = order or ChunkOrder.identity(ds.M)

    tree = build_tree(ds, order) if "etree" in methods else None
    forest = (build_forest(ds, order, ForestConfig.even(ds.M, trees))
              if "eforest" in methods else None)
    tables = [build_distance_table(codebook, q) for q in queries]
    outs = {m: np.empty(ds.N, dtype=np.float64) for m in ("adc", *methods)}
    run = {
        "adc": lambda t: adc_scan(t, ds, outs["adc"]),
        "etree": lambda t: traverse_distances(tree, t, outs["etree"]),
        "eforest": lambda t: forest_distances(forest, t, outs["eforest"], workers=workers),
    }

    for t in tables:
        run["adc"](t)
        for m in methods:
            if m == "adc":
                continue
            run[m](t)
            err = float(np.max(np.abs(outs[m] - outs["adc"]))) if ds.N else 0.0
            if not err <= TOLERANCE:
                raise EquivalenceError(f"{m} differs from ADC by {err:.3g} (> {TOLERANCE})")

    samples = {m: [] for m in methods}
    clock = time.perf_counter
    for _ in range(repetitions):
        # methods interleaved within a repetition so drift hits all of them alike
        for m in methods:
            t0 = clock()
            for t in tables:
                run[m](t)
            samples[m].append((clock() - t0) / len(tables))

    lookups = {"adc": ds.N * ds.M}
    memory = {"adc": ds.N * (ds.M + 4)}
    tstats = {}
    if tree is not None:
        lookups["etree"] = count_lookups(tree)
        memory["etree"] = tree.nbytes
        tstats["etree"] = [stats(tree)]
    if forest is not None:
        lookups["eforest"] = forest_lookups(forest)
        memory["eforest"] = forest.nbytes
        tstats["eforest"] = forest.stats()
    results = {
        m: MethodResult(float(np.median(samples[m])), lookups[m], memory[m], samples[m])
        for m in methods
    }
    dataset = {"N": ds.N, "M": ds.M, "K": ds.K, "queries": len(tables),
               "repetitions": repetitions, "storage": storage, "trees": trees,
               "order": "original" if order.is_identity else "random"}
    notes = ["memory and speed gains depend on how much the codes share prefixes; "
             "wall-clock ratios are hardware dependent"]
    return BenchReport(dataset, results, tstats, notes)
