"""Tests for the counter-based per-path normal generator."""

import numpy as np
from numpy.testing import assert_allclose

from diffpricer.rng import PathRng, philox4x32


def _words(c, k):
    return [int(x) for x in philox4x32(c[0], c[1], c[2], c[3], k[0], k[1])]


def test_philox_known_answers():
    # Random123 known-answer vectors for philox4x32-10
    assert _words((0, 0, 0, 0), (0, 0)) == [
        0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8]
    f = 0xFFFFFFFF
    assert _words((f, f, f, f), (f, f)) == [
        0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD]
    assert _words((0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344),
                  (0xA4093822, 0x299F31D0)) == [
        0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1]


def test_batch_size_does_not_reorder_paths():
    rng = PathRng(seed=1234)
    small = rng.normals(0, 100, step=7, n_factors=2)
    large = rng.normals(0, 100000, step=7, n_factors=2)
    assert np.array_equal(small, large[:100])


def test_shard_merge_equals_single_run():
    rng = PathRng(seed=99)
    whole = rng.normals(0, 1000, step=3, n_factors=3)
    parts = np.vstack([rng.normals(i, 250, step=3, n_factors=3)
                       for i in range(0, 1000, 250)])
    assert np.array_equal(whole, parts)


def test_seeds_and_steps_give_distinct_streams():
    a = PathRng(seed=1).normals(0, 512, step=0, n_factors=1)
    b = PathRng(seed=2).normals(0, 512, step=0, n_factors=1)
    c = PathRng(seed=1).normals(0, 512, step=1, n_factors=1)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert np.array_equal(a, PathRng(seed=1).normals(0, 512, step=0, n_factors=1))


def test_moments_within_bands():
    n = 1 << 20
    z = PathRng(seed=2024).normals(0, n, step=0, n_factors=2)
    se_mean = 1.0 / np.sqrt(n)
    assert np.all(np.abs(z.mean(axis=0)) < 3 * se_mean)
    # var estimator SE ~ sqrt(2/n)
    assert np.all(np.abs(z.var(axis=0) - 1.0) < 3 * np.sqrt(2.0 / n))
    corr = np.corrcoef(z[:, 0], z[:, 1])[0, 1]
    assert abs(corr) < 3 * se_mean


def test_normal_tail_fractions():
    n = 1 << 20
    z = PathRng(seed=7).normals(0, n, step=5, n_factors=1)[:, 0]
    for q, p in [(1.0, 0.158655), (2.0, 0.022750), (3.0, 0.001350)]:
        frac = np.mean(z > q)
        se = np.sqrt(p * (1 - p) / n)
        assert abs(frac - p) < 4 * se, (q, frac, p)


def test_all_values_finite_and_in_open_interval():
    z = PathRng(seed=0).normals(0, 4096, step=0, n_factors=4)
    assert np.all(np.isfinite(z))
    assert z.shape == (4096, 4)
