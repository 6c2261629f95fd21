import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from clusterens import datagen
from clusterens.cforest import (
    CenteredForest,
    MarginalCDF,
    OutOfSupport,
    SplitScheme,
    build_tree,
    ensemble_forest_predict,
    forest_predict,
    leaf_box,
    merged_forest_predict,
    sample_split_coords,
    tree_predict,
)
from clusterens.cforest import _kernels_py

try:
    from clusterens.cforest import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

needs_compiled = pytest.mark.skipif(_compiled is None, reason="compiled kernels not built")


def oracle_leaf(u, coords, depth):
    """Scalar descent with float arithmetic, independent of the kernels."""
    counts = {}
    node = 0
    for _ in range(depth):
        j = int(coords[node])
        c = counts.get(j, 0)
        bit = int(np.floor(u[j] * 2.0 ** (c + 1))) % 2
        counts[j] = c + 1
        node = 2 * node + 1 + bit
    return node - (2**depth - 1)


def _random_problem(seed, p=3, depth=5, n=200, m=50, q=2, B=7):
    rng = np.random.default_rng(seed)
    U_tr = np.minimum(rng.random((n, p)), np.nextafter(1.0, 0.0))
    U_te = rng.random((m, p))
    Z = rng.standard_normal((n, q))
    coords = rng.integers(0, p, size=(B, max(2**depth - 1, 1))).astype(np.intc)
    return U_tr, Z, U_te, coords, depth


# ------------------------------------------------------------------ kernels


@pytest.mark.parametrize("kernels", [_kernels_py, pytest.param(_compiled, marks=needs_compiled)], ids=["python", "compiled"])
def test_leaf_index_matches_oracle(kernels):
    U_tr, _, U_te, coords, depth = _random_problem(0)
    leaves = kernels.leaf_index(np.ascontiguousarray(U_te), coords[0], depth)
    expected = [oracle_leaf(u, coords[0], depth) for u in U_te]
    np.testing.assert_array_equal(leaves, expected)


@pytest.mark.parametrize("kernels", [_kernels_py, pytest.param(_compiled, marks=needs_compiled)], ids=["python", "compiled"])
def test_forest_leaf_mean_matches_bruteforce(kernels):
    U_tr, Z, U_te, coords, depth = _random_problem(1, n=60, m=20)
    out = kernels.forest_leaf_mean(U_tr, Z, U_te, coords, depth)
    expected = np.zeros_like(out)
    for b in range(coords.shape[0]):
        tr = np.array([oracle_leaf(u, coords[b], depth) for u in U_tr])
        for i, u in enumerate(U_te):
            mask = tr == oracle_leaf(u, coords[b], depth)
            if mask.any():
                expected[i] += Z[mask].mean(axis=0)
    np.testing.assert_allclose(out, expected / coords.shape[0], rtol=1e-12, atol=1e-15)


@needs_compiled
@given(st.integers(0, 2**32 - 1), st.integers(0, 8), st.integers(1, 4), st.integers(1, 3))
def test_backends_bit_identical(seed, depth, p, q):
    U_tr, Z, U_te, coords, depth = _random_problem(seed, p=p, depth=depth, q=q)
    a = _compiled.forest_leaf_mean(U_tr, Z, U_te, coords, depth)
    b = _kernels_py.forest_leaf_mean(U_tr, Z, U_te, coords, depth)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(_compiled.leaf_index(U_te, coords[0], depth), _kernels_py.leaf_index(U_te, coords[0], depth))


@needs_compiled
def test_dyadic_codes_agree_at_boundaries():
    depth = 6
    U = np.array([[0.0, 0.5, np.nextafter(0.5, 0), np.nextafter(1.0, 0), 1 / 64, np.nextafter(1 / 64, 0)]])
    np.testing.assert_array_equal(_compiled.dyadic_codes(U, depth), _kernels_py.dyadic_codes(U, depth))
    np.testing.assert_array_equal(_kernels_py.dyadic_codes(U, depth), [[0, 32, 31, 63, 1, 0]])


def test_pure_python_switch():
    code = "from clusterens.cforest import BACKEND; print(BACKEND)"
    env = dict(os.environ, CLUSTERENS_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_empty_leaves_predict_zero():
    U_tr = np.array([[0.1], [0.2]])
    U_te = np.array([[0.9]])
    coords = np.zeros((1, 1), dtype=np.intc)
    out = _kernels_py.forest_leaf_mean(U_tr, np.ones((2, 1)), U_te, coords, 1)
    assert out[0, 0] == 0.0


# ------------------------------------------------------------------ splits


def test_idealized_split_frequencies():
    scheme = SplitScheme.idealized(5, [0, 2, 3])
    draws = sample_split_coords(scheme, np.random.default_rng(0), 30_000)
    counts = np.bincount(draws, minlength=5)
    assert counts[1] == 0 and counts[4] == 0
    assert stats.chisquare(counts[[0, 2, 3]]).pvalue > 1e-3


def test_mtry_split_frequencies():
    # with M=1 the strong set is hit with probability S/p, else uniform over all
    scheme = SplitScheme.mtry(4, [0], 1)
    draws = sample_split_coords(scheme, np.random.default_rng(1), 20_000)
    assert stats.chisquare(np.bincount(draws, minlength=4)).pvalue > 1e-3
    # with large M the strong coordinate almost always appears
    big = SplitScheme.mtry(4, [0], 40)
    draws = sample_split_coords(big, np.random.default_rng(2), 2000)
    assert np.mean(draws == 0) > 0.99


def test_split_scheme_validation_and_roundtrip():
    with pytest.raises(ValueError):
        SplitScheme("explicit_probs", 3, [0.5, 0.6, 0.0])
    with pytest.raises(ValueError):
        SplitScheme("greedy", 3)
    with pytest.raises(ValueError):
        SplitScheme.mtry(3, [0], 0)
    s = SplitScheme.idealized(4, [1, 2])
    back = SplitScheme.from_dict(s.to_dict())
    np.testing.assert_array_equal(back.probs, s.probs)
    assert back.strong_set == (1, 2)


def test_build_tree_deterministic():
    s = SplitScheme.idealized(3, range(3))
    a, b = build_tree(6, s, seed=5), build_tree(6, s, seed=5)
    np.testing.assert_array_equal(a.coords, b.coords)
    assert a.coords.size == 63 and a.n_leaves == 64
    with pytest.raises(ValueError):
        build_tree(25, s, seed=0)
    assert build_tree(0, s, seed=0).coords.size == 0


# ------------------------------------------------------------------ cdf


@pytest.mark.parametrize("family", ["uniform", "gaussian", "laplace"])
def test_cdf_inverse_roundtrip(family):
    clusters = harness_clusters(family)
    cdf = MarginalCDF.for_clusters(clusters)
    for s in (0.1, 0.25, 0.5, 0.75, 0.9):
        for j in range(cdf.p):
            x = cdf.upper(s, j)
            pt = np.zeros((1, cdf.p))
            pt[0, j] = x
            assert cdf.cdf(pt)[0, j] == pytest.approx(s, abs=1e-12)


def harness_clusters(family, K=2, p=2):
    from clusterens.harness import forest_clusters

    return forest_clusters(family, K, 10, p)


def test_cdf_generalized_inverse_skips_gaps():
    # mixture of U(0, .5) and U(1, 1.5): F is flat on [.5, 1]
    cdf = MarginalCDF.for_clusters(datagen.uniform_clusters(2, 1, 10))
    assert cdf.lower(0.5, 0) == pytest.approx(1.0)
    assert cdf.upper(0.5, 0) == pytest.approx(0.5)
    assert cdf.lower(0.0, 0) == 0.0 and cdf.upper(1.0, 0) == 1.5


@given(st.lists(st.floats(-3, 3), min_size=2, max_size=20))
def test_cdf_monotone(xs):
    cdf = MarginalCDF("gaussian", np.array([[0.0], [2.0]]))
    u = cdf.cdf(np.sort(np.array(xs))[:, None])[:, 0]
    assert np.all(np.diff(u) >= 0)
    assert np.all((u >= 0) & (u < 1))


def test_out_of_support():
    cdf = MarginalCDF.for_clusters(datagen.uniform_clusters(2, 2, 10))
    with pytest.raises(OutOfSupport):
        cdf.check_support(np.array([2.0, 0.1]))
    cdf.check_support(np.array([1.5, 0.0]))


def test_cdf_roundtrip_dict():
    cdf = MarginalCDF.for_clusters(datagen.uniform_clusters(2, 2, 10))
    back = MarginalCDF.from_dict(cdf.to_dict())
    np.testing.assert_array_equal(back.locs, cdf.locs)
    with pytest.raises(ValueError):
        MarginalCDF.for_clusters(datagen.uniform_clusters(2, 2, 10), split_space="bogus")


def test_data_split_space_is_linear():
    cdf = MarginalCDF.for_clusters(datagen.uniform_clusters(2, 1, 10), split_space="data")
    assert cdf.family == "linear"
    assert cdf.cdf(np.array([[0.75]]))[0, 0] == pytest.approx(0.5)


# ------------------------------------------------------------------ boxes


@pytest.mark.parametrize("depth", [1, 3, 6, 9])
def test_quantile_box_measure_and_split_counts(depth):
    rng = np.random.default_rng(depth)
    cdf = MarginalCDF.for_clusters([datagen.ClusterSpec("uniform", 10, 3, start=[0, 0, 0], width=1.0)])
    scheme = SplitScheme.idealized(3, range(3))
    for seed in range(20):
        tree = build_tree(depth, scheme, seed)
        x = rng.random(3)
        box, counts = leaf_box(tree, cdf, x)
        assert counts.sum() == depth
        assert np.prod(box[:, 1] - box[:, 0]) == pytest.approx(2.0**-depth, rel=1e-12)
        assert np.all(box[:, 0] <= x) and np.all(x <= box[:, 1])


def test_merged_box_stays_inside_cluster():
    clusters = datagen.uniform_clusters(2, 1, 10)
    cdf = MarginalCDF.for_clusters(clusters)
    tree = build_tree(1, SplitScheme.idealized(1, [0]), seed=0)
    box, _ = leaf_box(tree, cdf, np.array([0.2]))
    np.testing.assert_allclose(box[0], [0.0, 0.5])
    box, _ = leaf_box(tree, cdf, np.array([1.2]))
    np.testing.assert_allclose(box[0], [1.0, 1.5])


# ------------------------------------------------------------------ forests


def _uniform_data(n=400, p=3, seed=0):
    clusters = datagen.uniform_clusters(2, p, n // 2)
    ds = datagen.make_dataset(clusters, datagen.gen_beta(p, p, seed=seed, noise_sd=0.1), seed=seed)
    return clusters, ds


def test_forest_equals_average_of_trees():
    clusters, ds = _uniform_data()
    cdf = MarginalCDF.for_clusters(clusters)
    forest = CenteredForest(5, 4, SplitScheme.idealized(3, range(3)), seed=3)
    X_test = datagen.gen_testpoints(clusters, 30, seed=1).X
    per_tree = np.mean([tree_predict(forest.tree(b), cdf, ds.X, ds.Y, X_test) for b in range(5)], axis=0)
    np.testing.assert_allclose(forest_predict(forest, cdf, ds.X, ds.Y, X_test), per_tree, rtol=1e-12)


def test_depth_zero_forest_is_global_mean():
    clusters, ds = _uniform_data()
    cdf = MarginalCDF.for_clusters(clusters)
    forest = CenteredForest(3, 0, SplitScheme.idealized(3, range(3)), seed=0)
    pred = forest_predict(forest, cdf, ds.X, ds.Y, ds.X[:5])
    np.testing.assert_allclose(pred, ds.Y.mean(), rtol=1e-12)


def test_constant_response_is_reproduced():
    clusters, ds = _uniform_data(n=4000)
    cdf = MarginalCDF.for_clusters(clusters)
    forest = CenteredForest(4, 3, SplitScheme.idealized(3, range(3)), seed=1)
    pred = merged_forest_predict(forest, cdf, ds.X, np.full(ds.n, 2.5), ds.X[:20])
    np.testing.assert_allclose(pred, 2.5, rtol=1e-14)


def test_ensemble_uses_own_cluster_forest():
    clusters, ds = _uniform_data()
    cdfs = [MarginalCDF.for_clusters([c]) for c in clusters]
    forest = CenteredForest(4, 3, SplitScheme.idealized(3, range(3)), seed=1)
    ts = datagen.gen_testpoints(clusters, 40, seed=2)
    pred = ensemble_forest_predict([forest, forest], cdfs, [ds.cluster(1), ds.cluster(2)], ts.X, ts.membership)
    for t in (1, 2):
        idx = ts.membership == t
        own = forest_predict(forest, cdfs[t - 1], *ds.cluster(t), ts.X[idx])
        np.testing.assert_allclose(pred[idx], own, rtol=1e-14)


def test_forest_serialization_and_validation():
    f = CenteredForest(3, 4, SplitScheme.idealized(3, [0, 1]), seed=9)
    back = CenteredForest.from_json(f.to_json())
    np.testing.assert_array_equal(back.coords, f.coords)
    assert f.tree_seed(0) != f.tree_seed(1)
    with pytest.raises(ValueError):
        CenteredForest(0, 4, SplitScheme.idealized(3, [0]), seed=0)


def test_leaf_means_matrix_response():
    clusters, ds = _uniform_data()
    cdf = MarginalCDF.for_clusters(clusters)
    forest = CenteredForest(3, 3, SplitScheme.idealized(3, range(3)), seed=2)
    from clusterens.cforest import leaf_means

    Z = np.column_stack([ds.Y, 2 * ds.Y])
    out = leaf_means(forest, cdf, ds.X, Z, ds.X[:10])
    np.testing.assert_allclose(out[:, 1], 2 * out[:, 0], rtol=1e-14)
    np.testing.assert_allclose(out[:, 0], leaf_means(forest, cdf, ds.X, ds.Y, ds.X[:10]), rtol=0)
