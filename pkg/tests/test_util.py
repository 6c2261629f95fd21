import math

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from clusterens._util import KahanAccumulator, fmean, fsum, make_rng, mix_seed, splitmix64


def test_splitmix64_reference_value():
    # first output of the reference SplitMix64 stream seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF


def test_mix_seed_is_deterministic_and_path_sensitive():
    assert mix_seed(7, 1, 2) == mix_seed(7, 1, 2)
    assert mix_seed(7, 1, 2) != mix_seed(7, 2, 1)
    assert mix_seed(7, 1) != mix_seed(8, 1)
    assert mix_seed(7) != mix_seed(7, 0)


@given(st.integers(0, 2**64 - 1), st.lists(st.integers(0, 10**6), max_size=4))
def test_mix_seed_stays_in_64_bits(master, path):
    s = mix_seed(master, *path)
    assert 0 <= s < 2**64


def test_children_are_distinct():
    seeds = {mix_seed(0, r) for r in range(10_000)}
    assert len(seeds) == 10_000


def test_make_rng_reproducible():
    a = make_rng(3, 1).standard_normal(5)
    b = make_rng(3, 1).standard_normal(5)
    np.testing.assert_array_equal(a, b)


def test_fsum_is_exact_on_cancellation():
    vals = [1e16, 1.0, -1e16]
    assert fsum(vals) == 1.0
    assert sum(vals) != 1.0
    assert fmean([1.0, 2.0, 3.0]) == 2.0


@given(st.lists(st.floats(-1e10, 1e10), min_size=1, max_size=50))
def test_kahan_matches_fsum(vals):
    acc = KahanAccumulator(())
    for v in vals:
        acc.add(v)
    assert math.isclose(float(acc.value()), math.fsum(vals), rel_tol=1e-12, abs_tol=1e-3)
