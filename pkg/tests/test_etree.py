import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from encodingtree.errors import ConfigError, CorruptBufferError, EmptyDatasetError, PreconditionViolation
from encodingtree.etree import (
    ChunkOrder,
    ETree,
    build_tree,
    construct,
    count_lookups,
    enumerate_leaves,
    parse,
    sort_encodings,
    stats,
    traverse_distances,
)
from encodingtree.quantizer import EncodedDataset, adc_scan

from oracles import reference_serialize, reference_sort, trie_stats

FOUR = np.array([[1, 2, 3, 4], [1, 2, 3, 5], [1, 2, 7, 7], [9, 9, 9, 9]])


def clustered_codes(rng, n, M, K, n_proto, flip=0.2):
    """Codes drawn around a few prototypes so prefixes are shared."""
    protos = rng.integers(0, K, size=(n_proto, M))
    codes = protos[rng.integers(0, n_proto, size=n)]
    mask = rng.random((n, M)) < flip
    codes[mask] = rng.integers(0, K, size=mask.sum())
    return codes.astype(np.uint8)


# ---------------------------------------------------------------- sorting


def test_sort_already_sorted_identity():
    ds = EncodedDataset.from_codes(FOUR, 16)
    assert sort_encodings(ds) == ds


def test_sort_two_codes():
    ds = EncodedDataset.from_codes([[2, 1], [1, 2]], 4)
    out = sort_encodings(ds)
    assert out.codes.tolist() == [[1, 2], [2, 1]]
    assert out.ids.tolist() == [1, 0]


def test_sort_matches_reference(rng=np.random.default_rng(5)):
    codes = rng.integers(0, 6, size=(1000, 5))
    ids = rng.permutation(5000)[:1000]
    perm = rng.permutation(5)
    out = sort_encodings(EncodedDataset(codes, ids, 6), ChunkOrder(perm))
    want_codes, want_ids = reference_sort(codes, ids, perm)
    np.testing.assert_array_equal(out.codes, want_codes)
    np.testing.assert_array_equal(out.ids, want_ids)


def test_sort_invalid_permutation():
    with pytest.raises(ConfigError):
        ChunkOrder([0, 0, 1])
    ds = EncodedDataset.from_codes(FOUR, 16)
    with pytest.raises(ConfigError):
        sort_encodings(ds, ChunkOrder.identity(3))


# ---------------------------------------------------------------- construction + layout


def test_four_code_example():
    tree = build_tree(EncodedDataset.from_codes(FOUR, 16))
    s = stats(tree)
    assert (s.L1, s.L2, s.total_postfix) == (3, 4, 4)
    assert s.avg_postfix == 1.0
    assert s.n_prime == 7
    assert s.memory_bytes == tree.nbytes == 34
    # oracle agreement for the frozen numbers
    assert trie_stats(FOUR) == (3, 4, 4)


def test_four_code_exact_bytes():
    tree = build_tree(EncodedDataset.from_codes(FOUR, 16))
    expected = bytes([
        9, 3, 9, 9, 9, 3, 0, 0, 0,     # leaf [9 | 9 9 9], id 3, depth 0
        1, 0,                          # internal chunk 1, depth 0
        2, 2,                          # internal chunk 2, depth 1
        7, 3, 7, 2, 0, 0, 0,           # leaf [7 | 7], id 2, depth 2
        3, 4,                          # internal chunk 3, depth 2
        4, 3, 0, 0, 0, 0,              # leaf [4], id 0, depth 3
        5, 3, 1, 0, 0, 0,              # leaf [5], id 1, depth 3
    ])
    assert tree.buffer.tobytes() == expected


@pytest.mark.parametrize("n", [1, 5, 127, 128, 300])
def test_identical_codes_single_leaf(n):
    M = 6
    tree = build_tree(EncodedDataset.from_codes(np.full((n, M), 4), 8))
    s = stats(tree)
    recs = -(-n // 127)
    assert (s.L1, s.L2, s.total_postfix) == (0, recs, recs * (M - 1))
    if n <= 127:
        assert tree.nbytes == 4 * n + 2 + (M - 1)
    leaves = enumerate_leaves(tree)
    assert leaves.ids.tolist() == list(range(n))


def test_distinct_first_chunk():
    N, M = 40, 5
    codes = np.column_stack([np.arange(N), np.full((N, M - 1), 3)])
    tree = build_tree(EncodedDataset.from_codes(codes, 64))
    s = stats(tree)
    assert (s.L1, s.L2, s.total_postfix) == (0, N, N * (M - 1))
    assert s.avg_postfix == M - 1
    assert s.memory_bytes == 4 * N + 2 * N + N * (M - 1) == tree.nbytes
    assert count_lookups(tree) == N * M


def test_unsorted_input_rejected():
    ds = EncodedDataset.from_codes([[2, 1], [1, 2]], 4)
    with pytest.raises(PreconditionViolation, match="precondition violation"):
        construct(ds)


def test_empty_dataset_rejected():
    with pytest.raises(EmptyDatasetError, match="empty dataset"):
        construct(EncodedDataset.from_codes(np.zeros((0, 3), dtype=np.uint8)))


def test_m_equals_one():
    codes = np.array([[3], [1], [3], [0]])
    tree = build_tree(EncodedDataset.from_codes(codes, 4))
    s = stats(tree)
    assert (s.L1, s.L2, s.total_postfix) == (0, 3, 0)
    t = np.array([[0.5, 1.5, 2.5, 3.5]])
    np.testing.assert_array_equal(traverse_distances(tree, t), [3.5, 1.5, 3.5, 0.5])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), M=st.sampled_from([1, 2, 3, 4, 8]),
       K=st.sampled_from([2, 3, 16, 256]), n=st.integers(1, 400))
def test_layout_matches_reference_serializer(seed, M, K, n):
    rng = np.random.default_rng(seed)
    codes = clustered_codes(rng, n, M, K, n_proto=int(rng.integers(1, 6)))
    ds = sort_encodings(EncodedDataset.from_codes(codes, K, ids=rng.permutation(10 * n)[:n]))
    tree = construct(ds)
    assert tree.buffer.tobytes() == reference_serialize(ds.codes, ds.ids)
    s = stats(tree)
    assert (s.L1, s.L2, s.total_postfix) == trie_stats(ds.codes)
    assert s.formula_ok
    assert enumerate_leaves(tree) == ds


def test_construction_is_deterministic(rng=np.random.default_rng(2)):
    codes = clustered_codes(rng, 5000, 8, 256, 20)
    ds = EncodedDataset.from_codes(codes)
    assert build_tree(ds).buffer.tobytes() == build_tree(ds).buffer.tobytes()


# ---------------------------------------------------------------- parsing


def test_parse_rejects_truncation():
    tree = build_tree(EncodedDataset.from_codes(FOUR, 16))
    with pytest.raises(CorruptBufferError, match="corrupt buffer"):
        parse(tree.buffer[:-1], 4, 16)


def test_parse_rejects_single_child_internal():
    # internal node at depth 0 over one leaf only
    buf = np.array([1, 0, 2, 3, 3, 4, 0, 0, 0, 0], dtype=np.uint8)
    with pytest.raises(CorruptBufferError, match="fewer than two"):
        parse(buf, 4, 16)


def test_parse_rejects_bad_depth_and_chunk():
    with pytest.raises(CorruptBufferError):
        parse(np.array([1, 2 << 1], dtype=np.uint8), 4, 16)   # jumps to depth 2
    with pytest.raises(CorruptBufferError):
        parse(np.array([20, 3, 0, 0, 0, 0, 0, 0, 0], dtype=np.uint8), 4, 16)  # chunk >= K
    with pytest.raises(CorruptBufferError):
        parse(np.array([1, 1, 0, 0, 0], dtype=np.uint8), 4, 16)  # zero-id leaf


def test_chained_leaves_count_as_one_code():
    # two chained records of the same code are one distinct code: parent invalid
    leaf = [5, (1 << 1) | 1, 0, 0, 0, 0]
    buf = np.array([1, 0] + leaf + [5, 3, 1, 0, 0, 0], dtype=np.uint8)
    with pytest.raises(CorruptBufferError):
        parse(buf, 2, 16)


# ---------------------------------------------------------------- traversal


def _table(rng, M, K):
    return rng.random((M, K))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), M=st.sampled_from([1, 2, 4, 8, 16]),
       K=st.sampled_from([4, 16, 256]), n=st.integers(1, 3000))
def test_traversal_equals_adc(seed, M, K, n):
    rng = np.random.default_rng(seed)
    codes = clustered_codes(rng, n, M, K, n_proto=int(rng.integers(1, 30)), flip=rng.uniform(0, 0.6))
    ds = EncodedDataset.from_codes(codes, K)
    order = ChunkOrder.randomized(M, seed) if seed % 2 else ChunkOrder.identity(M)
    tree = build_tree(ds, order)
    t = _table(rng, M, K)
    np.testing.assert_allclose(traverse_distances(tree, t), adc_scan(t, ds), rtol=0, atol=1e-4)


def test_traversal_identity_order_is_bitwise_adc(rng=np.random.default_rng(8)):
    codes = clustered_codes(rng, 20_000, 8, 256, 50)
    ds = EncodedDataset.from_codes(codes)
    t = _table(rng, 8, 256)
    np.testing.assert_array_equal(traverse_distances(build_tree(ds), t), adc_scan(t, ds))


def test_traversal_sparse_ids(rng=np.random.default_rng(9)):
    codes = clustered_codes(rng, 500, 4, 16, 5)
    ids = np.sort(rng.choice(1_000_000, 500, replace=False))
    ds = EncodedDataset(codes, ids, 16)
    t = _table(rng, 4, 16)
    np.testing.assert_allclose(traverse_distances(build_tree(ds), t), adc_scan(t, ds), atol=1e-12)


def test_zero_table_gives_zeros(rng=np.random.default_rng(3)):
    tree = build_tree(EncodedDataset.from_codes(clustered_codes(rng, 300, 4, 16, 3), 16))
    assert not traverse_distances(tree, np.zeros((4, 16))).any()


def test_lookup_count_matches_stats(rng=np.random.default_rng(4)):
    codes = clustered_codes(rng, 5000, 8, 256, 10, flip=0.1)
    tree = build_tree(EncodedDataset.from_codes(codes))
    s = stats(tree)
    assert count_lookups(tree, _table(rng, 8, 256)) == s.L1 + s.L2 + s.total_postfix == s.lookups
    assert s.lookups < 5000 * 8


def test_order_invariance(rng=np.random.default_rng(6)):
    codes = clustered_codes(rng, 4000, 8, 32, 12)
    ds = EncodedDataset.from_codes(codes, 32)
    t = _table(rng, 8, 32)
    base = traverse_distances(build_tree(ds), t)
    for seed in range(4):
        other = traverse_distances(build_tree(ds, ChunkOrder.randomized(8, seed)), t)
        np.testing.assert_allclose(other, base, atol=1e-9)


def test_table_mismatch_config_error():
    tree = build_tree(EncodedDataset.from_codes(FOUR, 16))
    with pytest.raises(ConfigError, match="config error"):
        traverse_distances(tree, np.zeros((3, 16)))


def test_tree_metadata_validation():
    with pytest.raises(ConfigError):
        ETree(np.zeros(0, np.uint8), 1, 4, 16, ChunkOrder.identity(4), 3, 2)
