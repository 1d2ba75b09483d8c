import numpy as np
import pytest

from cosmo_rul.adapt import (
    CoralTransform,
    RankDeficiencyWarning,
    apply_coral,
    fit_coral,
    raw_baseline,
)
from cosmo_rul.dataset import N_FEATURES, Trajectory
from cosmo_rul.forest import ForestConfig, fit as fit_forest


def _dataset(n, d=N_FEATURES, seed=0, mixing=True):
    rng = np.random.default_rng(seed)
    X = rng.normal(0, 1, size=(n, d))
    if mixing:
        X = X @ rng.uniform(-1, 1, size=(d, d)) + rng.uniform(-5, 5, size=d)
    return X


def _rel_gap(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_identical_datasets_preserve_covariance():
    X = _dataset(500, seed=1)
    transform = fit_coral(X, X)
    aligned = apply_coral(transform, X)
    original = np.cov(X, rowvar=False, ddof=1)
    assert _rel_gap(np.cov(aligned, rowvar=False, ddof=1), original) < 1e-8


def test_identical_datasets_leave_rows_nearly_unchanged():
    X = _dataset(400, seed=2)
    aligned = apply_coral(fit_coral(X, X), X)
    assert np.allclose(aligned, X, rtol=1e-6, atol=1e-8)


def test_scaled_covariance_is_matched():
    X = _dataset(600, seed=3)
    target = 2.0 * X  # covariance scales by 4 with the same eigenvectors
    transform = fit_coral(X, target)
    aligned = apply_coral(transform, X)
    cov_aligned = np.cov(aligned, rowvar=False, ddof=1)
    cov_expected = 4.0 * np.cov(X, rowvar=False, ddof=1)
    assert _rel_gap(cov_aligned, cov_expected) < 1e-6


def test_full_rank_alignment_is_exact():
    for seed in range(10):
        source = _dataset(200 + 10 * seed, seed=seed)
        target = _dataset(300, seed=1000 + seed)
        transform = fit_coral(source, target)
        aligned = apply_coral(transform, source)
        cov_aligned = np.cov(aligned, rowvar=False, ddof=1)
        cov_target = np.cov(target, rowvar=False, ddof=1)
        assert _rel_gap(cov_aligned, cov_target) < 1e-6, seed


def test_alignment_reduces_covariance_gap():
    source = _dataset(300, seed=4)
    target = _dataset(300, seed=5)
    cov_s = np.cov(source, rowvar=False, ddof=1)
    cov_t = np.cov(target, rowvar=False, ddof=1)
    aligned = apply_coral(fit_coral(source, target), source)
    cov_a = np.cov(aligned, rowvar=False, ddof=1)
    assert np.linalg.norm(cov_a - cov_t) < np.linalg.norm(cov_s - cov_t)


def test_few_rows_warn_but_return_transform():
    source = _dataset(3, seed=6, mixing=False)
    target = _dataset(100, seed=7)
    with pytest.warns(RankDeficiencyWarning):
        transform = fit_coral(source, target)
    out = apply_coral(transform, source)
    assert out.shape == source.shape
    assert np.isfinite(out).all()


def test_apply_is_linear():
    X = _dataset(50, seed=8)
    Y = _dataset(50, seed=9)
    transform = fit_coral(_dataset(200, seed=10), _dataset(200, seed=11))
    combined = apply_coral(transform, 2.0 * X + 3.0 * Y)
    separate = 2.0 * apply_coral(transform, X) + 3.0 * apply_coral(transform, Y)
    assert np.allclose(combined, separate, rtol=1e-9, atol=1e-9)


def test_zero_rows_map_to_zero():
    transform = fit_coral(_dataset(100, seed=12), _dataset(100, seed=13))
    zeros = np.zeros((5, N_FEATURES))
    assert np.array_equal(apply_coral(transform, zeros), zeros)


def test_fit_coral_validation():
    X = _dataset(100, seed=14)
    with pytest.raises(ValueError, match="at least 2"):
        fit_coral(X[:1], X)
    with pytest.raises(ValueError, match="columns"):
        fit_coral(X, X[:, :5])
    with pytest.raises(ValueError, match="finite"):
        fit_coral(np.full((50, 4), np.nan), np.zeros((50, 4)))
    with pytest.raises(ValueError, match="eps"):
        fit_coral(X, X, eps=0.0)


def test_apply_coral_validation():
    transform = fit_coral(_dataset(100, seed=15), _dataset(100, seed=16))
    with pytest.raises(ValueError, match="columns"):
        apply_coral(transform, np.zeros((3, 5)))
    with pytest.raises(ValueError, match="finite"):
        apply_coral(transform, np.full((3, N_FEATURES), np.inf))


def test_coral_transform_validation():
    with pytest.raises(ValueError, match="square"):
        CoralTransform(whitening=np.zeros((2, 3)), recoloring=np.zeros((3, 3)), eps=1e-6)
    with pytest.raises(ValueError, match="eps"):
        CoralTransform(whitening=np.eye(2), recoloring=np.eye(2), eps=0.0)


def test_raw_baseline_passthrough():
    X = _dataset(40, seed=17)
    out = raw_baseline(X)
    assert np.array_equal(out, X)
    out[0, 0] = 123.0  # the baseline returns an independent copy
    assert X[0, 0] != 123.0


def test_raw_baseline_stacks_trajectories():
    rng = np.random.default_rng(18)
    trajs = [
        Trajectory(unit_id=1, samples=rng.uniform(0, 1, size=(4, N_FEATURES))),
        Trajectory(unit_id=2, samples=rng.uniform(0, 1, size=(6, N_FEATURES))),
    ]
    out = raw_baseline(trajs)
    assert out.shape == (10, N_FEATURES)
    assert np.array_equal(out[:4], trajs[0].samples)
    assert np.array_equal(out[4:], trajs[1].samples)


def test_raw_baseline_empty_and_single_vector():
    assert raw_baseline([]).shape == (0, N_FEATURES)
    assert raw_baseline(np.array([])).shape == (0, N_FEATURES)
    single = raw_baseline(np.ones(N_FEATURES))
    assert single.shape == (1, N_FEATURES)


def test_raw_baseline_output_feeds_regressor():
    rng = np.random.default_rng(19)
    trajs = [
        Trajectory(unit_id=i + 1, samples=rng.uniform(0, 1, size=(20, N_FEATURES)))
        for i in range(3)
    ]
    X = raw_baseline(trajs)
    y = rng.uniform(0, 130, size=X.shape[0])
    model = fit_forest(X, y, ForestConfig(n_trees=2, seed=0))
    assert model.input_dim == N_FEATURES
