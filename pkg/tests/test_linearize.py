import numpy as np
import pytest
from scipy.optimize import linprog

from lowrank_occupancy.linearize import l1_linearize


def _dual_residual(d_hat, mu):
    # max_l l . d_hat  s.t.  mu^T l = 0, -1 <= l <= 1  (the LP dual of the l1 fit)
    res = linprog(-d_hat, A_eq=mu.T, b_eq=np.zeros(mu.shape[1]), bounds=[(-1, 1)] * d_hat.size, method="highs-ipm")
    return -res.fun


def test_in_span():
    rng = np.random.default_rng(0)
    mu = rng.random((6, 3))
    d = mu @ np.array([0.2, -0.1, 0.5])
    f = l1_linearize(d, mu)
    assert f.residual < 1e-12 and np.allclose(f.d_tilde, d, atol=1e-12)


def test_constant_fit_takes_midpoint():
    f = l1_linearize(np.array([0.0, 1.0]), np.array([[1.0], [1.0]]))
    assert f.theta[0] == pytest.approx(0.5, abs=1e-9)
    assert f.residual == pytest.approx(1.0, abs=1e-12)


def test_matches_dual_oracle():
    rng = np.random.default_rng(1)
    for _ in range(30):
        X, d = int(rng.integers(3, 12)), int(rng.integers(1, 4))
        mu = rng.dirichlet(np.ones(X), size=d).T
        d_hat = rng.random(X)
        assert l1_linearize(d_hat, mu).residual == pytest.approx(_dual_residual(d_hat, mu), abs=1e-8)


def test_linearization_contraction():
    rng = np.random.default_rng(2)
    for _ in range(30):
        mu = rng.dirichlet(np.ones(8), size=3).T
        dbar = mu @ rng.random(3)
        d_hat = dbar + rng.normal(scale=0.05, size=8)
        f = l1_linearize(d_hat, mu)
        assert np.abs(d_hat - f.d_tilde).sum() <= np.abs(d_hat - dbar).sum() + 1e-9
