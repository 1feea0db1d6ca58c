"""Slow, obviously-correct reference implementations used only by tests."""

import math

import numpy as np


def brute_argmin_codes(centroids, x):
    """Per-subspace exhaustive argmin, first index wins ties."""
    M, K, ds = centroids.shape
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    out = np.empty((x.shape[0], M), dtype=np.int64)
    for i in range(x.shape[0]):
        for m in range(M):
            sub = x[i, m * ds:(m + 1) * ds]
            best, arg = math.inf, 0
            for k in range(K):
                dist = float(((sub - centroids[m, k].astype(np.float64)) ** 2).sum())
                if dist < best:
                    best, arg = dist, k
            out[i, m] = arg
    return out


def reference_sort(codes, ids, perm):
    """Stable comparison sort of permuted codes using Python tuples."""
    rows = [(tuple(int(c) for c in np.asarray(code)[perm]), pos) for pos, code in enumerate(codes)]
    rows.sort(key=lambda r: (r[0], r[1]))
    return (np.array([r[0] for r in rows], dtype=np.uint8).reshape(len(rows), len(perm)),
            np.array([ids[r[1]] for r in rows], dtype=np.uint32))


def trie_stats(codes, max_ids=127):
    """Build an uncompressed dict trie, then fold single-code paths into leaves.

    Returns ``(L1, L2, total_postfix)`` where L2 counts leaf records (a code
    with more than ``max_ids`` copies needs several records).
    """
    codes = [tuple(int(c) for c in row) for row in np.asarray(codes)]
    M = len(codes[0])
    root = {}
    counts = {}
    for c in codes:
        node = root
        for ch in c:
            node = node.setdefault(ch, {})
        counts[c] = counts.get(c, 0) + 1

    def distinct_below(node, depth):
        if depth == M:
            return 1
        return sum(distinct_below(child, depth + 1) for child in node.values())

    L1 = L2 = postfix = 0

    def walk(node, depth, prefix):
        nonlocal L1, L2, postfix
        for ch, child in node.items():
            p = prefix + (ch,)
            if distinct_below(child, depth + 1) >= 2:
                L1 += 1
                walk(child, depth + 1, p)
            else:
                # single code below: descend to find it
                full = p
                n = child
                while len(full) < M:
                    (k2, n), = n.items()
                    full = full + (k2,)
                recs = math.ceil(counts[full] / max_ids)
                L2 += recs
                postfix += recs * (M - depth - 1)

    walk(root, 0, ())
    return L1, L2, postfix


def reference_serialize(codes, ids, max_ids=127):
    """Pure-Python serializer of the flat layout (leaves before internal siblings)."""
    codes = [tuple(int(c) for c in row) for row in np.asarray(codes)]
    M = len(codes[0])
    groups = {}
    for c, i in zip(codes, ids):
        groups.setdefault(c, []).append(int(i))
    keys = sorted(groups)
    out = bytearray()

    def emit(sub, depth):
        by_chunk = {}
        for c in sub:
            by_chunk.setdefault(c[depth], []).append(c)
        ch_sorted = sorted(by_chunk)
        for ch in ch_sorted:
            members = by_chunk[ch]
            if len(members) == 1:
                c = members[0]
                id_list = groups[c]
                for s in range(0, len(id_list), max_ids):
                    part = id_list[s:s + max_ids]
                    out.append(ch)
                    out.append((len(part) << 1) | 1)
                    out.extend(c[depth + 1:])
                    for i in part:
                        out.extend(int(i).to_bytes(4, "little"))
        for ch in ch_sorted:
            members = by_chunk[ch]
            if len(members) > 1:
                out.append(ch)
                out.append(depth << 1)
                emit(members, depth + 1)

    emit(keys, 0)
    return bytes(out)


def direct_sq_dist(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(((a - b) ** 2).sum())
