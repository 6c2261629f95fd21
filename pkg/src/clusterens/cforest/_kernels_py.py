"""Pure numpy versions of the compiled kernels (same results, slower)."""

import numpy as np


def dyadic_codes(U, depth):
    return (np.asarray(U, dtype=float) * float(1 << depth)).astype(np.int64)


def _leaf_from_codes(codes, coords, depth):
    m, p = codes.shape
    rows = np.arange(m)
    counts = np.zeros((m, max(p, 1)), dtype=np.int64)
    node = np.zeros(m, dtype=np.int64)
    for _ in range(depth):
        j = coords[node]
        c = counts[rows, j]
        counts[rows, j] = c + 1
        node = 2 * node + 1 + ((codes[rows, j] >> (depth - 1 - c)) & 1)
    return node - ((1 << depth) - 1)


def leaf_index(U, coords, depth):
    return _leaf_from_codes(dyadic_codes(U, depth), np.asarray(coords), depth)


def forest_leaf_mean(U_train, Z, U_test, coords, depth):
    Z = np.ascontiguousarray(Z, dtype=float)
    coords = np.ascontiguousarray(coords, dtype=np.intc)
    tr = dyadic_codes(U_train, depth)
    te = dyadic_codes(U_test, depth)
    m, q = te.shape[0], Z.shape[1]
    n_leaves = 1 << depth
    tot = np.zeros((m, q))
    comp = np.zeros((m, q))
    for b in range(coords.shape[0]):
        leaf_tr = _leaf_from_codes(tr, coords[b], depth)
        cnt = np.bincount(leaf_tr, minlength=n_leaves).astype(float)
        sums = np.column_stack([np.bincount(leaf_tr, weights=Z[:, k], minlength=n_leaves) for k in range(q)])
        leaf_te = _leaf_from_codes(te, coords[b], depth)
        c = cnt[leaf_te][:, None]
        x = np.where(c > 0, sums[leaf_te] / np.where(c > 0, c, 1.0), 0.0)
        t = tot + x
        comp += np.where(np.abs(tot) >= np.abs(x), (tot - t) + x, (x - t) + tot)
        tot = t
    return (tot + comp) / coords.shape[0]
