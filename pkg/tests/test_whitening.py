"""Whitening: hand-computed cases, statistical invariants, error paths."""
import numpy as np
import pytest

from neartag.errors import (
    DimensionMismatch,
    NonFiniteInput,
    RankDeficient,
    TooFewSamples,
)
from neartag.whitening import WhiteningModel, apply_whitening, fit_whitening


def brute_covariance(x):
    """Population covariance computed the slow, independent way."""
    mu = x.mean(axis=0)
    acc = np.zeros((x.shape[1], x.shape[1]))
    for row in x:
        d = row - mu
        acc += np.outer(d, d)
    return acc / x.shape[0]


def test_hand_example_unit_cross():
    # keys {(1,0), (-1,0), (0,1), (0,-1)}: mu = 0, covariance = 0.5 I,
    # so any valid map satisfies w w^T = 2 I and whitening scales by sqrt(2).
    keys = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    m = fit_whitening(keys)
    assert np.allclose(m.mu, 0.0, atol=1e-15)
    assert np.allclose(m.w @ m.w.T, 2.0 * np.eye(2), atol=1e-12)
    out = apply_whitening(m, np.array([1.0, 0.0]))
    # up to sign and axis permutation the image is (sqrt(2), 0)
    assert np.allclose(sorted(np.abs(out)), [0.0, np.sqrt(2.0)], atol=1e-12)
    whitened = apply_whitening(m, keys)
    assert np.allclose(brute_covariance(whitened), np.eye(2), atol=1e-12)


def test_gaussian_cloud_cov_identity():
    rng = np.random.default_rng(42)
    x = rng.normal(size=(1000, 16)) @ rng.normal(size=(16, 16)) + rng.normal(size=16)
    m = fit_whitening(x)
    white = apply_whitening(m, x)
    cov = brute_covariance(white)
    assert np.linalg.norm(cov - np.eye(16), ord="fro") < 1e-4
    assert np.max(np.abs(white.mean(axis=0))) < 1e-6


def test_refit_on_whitened_set_is_near_identity():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(400, 8)) * np.linspace(0.2, 5.0, 8)
    white = apply_whitening(fit_whitening(x), x)
    again = apply_whitening(fit_whitening(white), white)
    assert np.linalg.norm(brute_covariance(again) - np.eye(8), ord="fro") < 1e-6


def test_affine_map_exactness():
    # whitening is affine: f(a) - f(b) == (a - b) @ w up to float noise
    rng = np.random.default_rng(3)
    x = rng.normal(size=(50, 6))
    m = fit_whitening(x)
    a, b = rng.normal(size=6), rng.normal(size=6)
    lhs = apply_whitening(m, a) - apply_whitening(m, b)
    rhs = (a - b) @ np.asarray(m.w, dtype=np.float64)
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_single_vs_batch_bitwise_identical():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(200, 12))
    m = fit_whitening(x)
    batch = apply_whitening(m, x)
    for i in range(0, 200, 17):
        assert np.array_equal(apply_whitening(m, x[i]), batch[i])


def test_deterministic_fit():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(300, 10))
    m1, m2 = fit_whitening(x), fit_whitening(x.copy())
    assert m1.mu.tobytes() == m2.mu.tobytes()
    assert m1.w.tobytes() == m2.w.tobytes()


def test_identity_model_is_noop():
    m = WhiteningModel(mu=np.zeros(3), w=np.eye(3))
    v = np.array([1.5, -2.0, 0.25])
    assert np.array_equal(apply_whitening(m, v), v)


def test_too_few_samples():
    with pytest.raises(TooFewSamples):
        fit_whitening(np.ones((1, 4)))


def test_rank_deficient_duplicate_column():
    rng = np.random.default_rng(0)
    col = rng.normal(size=(100, 1))
    x = np.hstack([col, col, rng.normal(size=(100, 1))])
    with pytest.raises(RankDeficient):
        fit_whitening(x)


def test_rank_deficient_fewer_samples_than_dims():
    rng = np.random.default_rng(2)
    with pytest.raises(RankDeficient):
        fit_whitening(rng.normal(size=(5, 10)))


def test_rank_deficient_constant_input():
    with pytest.raises(RankDeficient):
        fit_whitening(np.ones((20, 3)))


def test_non_finite_rejected():
    x = np.ones((10, 2))
    x[3, 1] = np.nan
    with pytest.raises(NonFiniteInput):
        fit_whitening(x)


def test_apply_dimension_mismatch():
    m = WhiteningModel(mu=np.zeros(3), w=np.eye(3))
    with pytest.raises(DimensionMismatch):
        apply_whitening(m, np.zeros(4))
