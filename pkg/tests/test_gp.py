import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsuperopt.gp import GaussianProcess, median_length_scale


def _obs(seed, n=12, d=3):
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(n, d))
    y = np.sin(Z).sum(1) * 3 + 10
    return Z, y


def test_median_heuristic():
    Z = np.array([[0.0], [1.0], [3.0]])
    assert median_length_scale(Z) == 2.0  # distances 1, 2, 3
    assert median_length_scale(Z[:1], fallback=5.0) == 5.0
    assert median_length_scale(np.zeros((3, 2)), fallback=0.7) == 0.7


def test_posterior_matches_direct_solve():
    Z, y = _obs(0)
    gp = GaussianProcess(Z, y)
    rng = np.random.default_rng(1)
    Q = rng.normal(size=(5, 3))
    ys = (y - y.mean()) / y.std()
    k = lambda A, B: np.exp(-((A[:, None, :] - B[None, :, :]) ** 2).sum(-1) / (2 * gp.length_scale ** 2))
    K = k(Z, Z) + gp.noise * np.eye(len(Z))
    mean = k(Q, Z) @ np.linalg.solve(K, ys) * y.std() + y.mean()
    var = (1 - np.einsum("ij,ji->i", k(Q, Z), np.linalg.solve(K, k(Z, Q)))) * y.var()
    mu, v = gp.predict(Q)
    assert np.allclose(mu, mean, atol=1e-8)
    assert np.allclose(v, var, atol=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_interpolates_and_ei_properties(seed):
    Z, y = _obs(seed)
    gp = GaussianProcess(Z, y)
    mu, _ = gp.predict(Z)
    assert np.max(np.abs(mu - y)) < 1e-4
    best = int(np.argmin(mu))
    assert gp.expected_improvement(Z[best:best + 1])[0] < 1e-8
    rng = np.random.default_rng(seed)
    cand = np.vstack([rng.normal(size=(500, 3)) * 3, Z])
    assert np.all(gp.expected_improvement(cand) >= 0)
    assert gp.incumbent == pytest.approx(y.min(), abs=1e-4)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=8, unique=True), st.floats(-10, 10))
def test_ei_nonnegative_1d(xs, q):
    Z = np.array(xs)[:, None]
    y = np.cos(Z[:, 0])
    gp = GaussianProcess(Z, y)
    assert gp.expected_improvement(np.array([[q]]))[0] >= 0


def test_single_observation():
    gp = GaussianProcess(np.zeros((1, 2)), np.array([3.0]), fallback_length_scale=1.0)
    assert gp.predict(np.zeros((1, 2)))[0][0] == pytest.approx(3.0)
    assert gp.expected_improvement(np.ones((1, 2)))[0] > 0


def test_duplicate_points_still_factor():
    Z = np.zeros((3, 2))
    gp = GaussianProcess(Z, np.array([1.0, 1.0, 1.0 + 1e-9]), fallback_length_scale=1.0)
    assert np.isfinite(gp.predict(Z)[0]).all()
