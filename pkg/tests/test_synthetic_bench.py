import numpy as np
import pytest

from encodingtree.bench import bench_scan, stored_sorted
from encodingtree.errors import ConfigError, EquivalenceError
from encodingtree.etree import ChunkOrder
from encodingtree.metrics import exact_knn, recall_at, recall_k_at_k
from encodingtree.quantizer import EncodedDataset, encode, train_pq
from encodingtree.synthetic import SyntheticSpec, gen_synthetic


def test_synthetic_deterministic_and_shaped():
    a = gen_synthetic(SyntheticSpec(100, 8, 5, 0.1, seed=1))
    b = gen_synthetic(SyntheticSpec(100, 8, 5, 0.1, seed=1))
    assert a.dtype == np.float32 and a.shape == (100, 8)
    assert a.tobytes() == b.tobytes()


def test_synthetic_tight_clusters():
    x = gen_synthetic(SyntheticSpec(2000, 4, 3, 1e-3, seed=0)).astype(np.float64)
    assert np.unique(np.round(x, 1), axis=0).shape[0] <= 3


def test_synthetic_validation():
    with pytest.raises(ConfigError):
        SyntheticSpec(0, 4)
    with pytest.raises(ConfigError):
        SyntheticSpec(10, 4, cluster_stddev=0.0)


def test_exact_knn_and_recall():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((300, 5))
    q = rng.standard_normal((20, 5))
    gt = exact_knn(x, q, 4)
    d = ((q[:, None, :] - x[None]) ** 2).sum(-1)
    np.testing.assert_array_equal(gt[:, 0], d.argmin(axis=1))
    assert recall_at(gt, gt, 1) == 1.0
    shifted = np.roll(gt, 1, axis=1)
    assert recall_at(shifted, gt, 1) == 0.0
    assert recall_at(shifted, gt, 2) == 1.0
    assert recall_k_at_k(shifted, gt, 4) == 1.0


@pytest.fixture(scope="module")
def encoded():
    x = gen_synthetic(SyntheticSpec(20_000, 16, 200, 0.05, seed=5))
    cb = train_pq(x[:4000], 4, 64, 8, seed=0)
    return EncodedDataset.from_codes(encode(cb, x), 64), cb, x[:3] + 0.01


@pytest.mark.parametrize("storage", ["sorted", "original"])
def test_bench_report(encoded, storage):
    ds, cb, q = encoded
    rep = bench_scan(ds, cb, q, repetitions=2, storage=storage, order=ChunkOrder.randomized(4, 0))
    assert set(rep.methods) == {"adc", "etree", "eforest"}
    assert rep.methods["adc"].lookups == ds.N * ds.M
    assert rep.methods["adc"].memory_bytes == ds.N * (ds.M + 4)
    assert rep.methods["etree"].lookups < ds.N * ds.M
    assert all(len(r.samples) == 2 and r.seconds > 0 for r in rep.methods.values())
    lines = rep.records()
    assert all("=" in line for line in lines)
    assert any(line.startswith("etree.speedup=") for line in lines)
    assert "adc" in rep.text()


def test_stored_sorted_keeps_mapping(encoded):
    ds, _, _ = encoded
    s, original = stored_sorted(ds)
    assert s.ids.tolist() == list(range(ds.N))
    np.testing.assert_array_equal(s.codes, ds.codes[original])


def test_bench_equivalence_failure(encoded, monkeypatch):
    import encodingtree.bench as bench

    ds, cb, q = encoded
    real = bench.traverse_distances

    def broken(tree, table, out=None):
        r = real(tree, table, out)
        r[0] += 1.0
        return r

    monkeypatch.setattr(bench, "traverse_distances", broken)
    with pytest.raises(EquivalenceError):
        bench_scan(ds, cb, q, methods=("adc", "etree"), repetitions=1)


def test_bench_validation(encoded):
    ds, cb, q = encoded
    with pytest.raises(ConfigError):
        bench_scan(ds, cb, q, methods=("adc", "fast"))
    with pytest.raises(ConfigError):
        bench_scan(ds, cb, q, storage="shuffled")
