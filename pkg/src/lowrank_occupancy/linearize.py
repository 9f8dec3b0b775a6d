"""Closest linear approximation in the l1 norm, solved as a linear program."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import LowRankError


@dataclass(frozen=True)
class L1Fit:
    d_tilde: np.ndarray
    theta: np.ndarray
    residual: float  # ||mu @ theta - d_hat||_1


def l1_linearize(d_hat, mu) -> L1Fit:
    """argmin_theta ||mu @ theta - d_hat||_1 in epigraph form.

    The l1 minimizer is often not unique; among minimizers the one with the
    smallest largest absolute residual is returned, so that e.g. fitting a
    constant to (0, 1) gives 0.5.
    """
    d_hat = np.asarray(d_hat, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    if mu.ndim == 1:
        mu = mu[:, None]
    X, d = mu.shape
    eye = np.eye(X)
    # variables (theta, e): mu theta - e <= d_hat, -mu theta - e <= -d_hat
    A = np.block([[mu, -eye], [-mu, -eye]])
    b = np.concatenate([d_hat, -d_hat])
    bounds = [(None, None)] * d + [(0, None)] * X
    res = linprog(np.concatenate([np.zeros(d), np.ones(X)]), A_ub=A, b_ub=b, bounds=bounds, method="highs")
    if res.status != 0:
        raise LowRankError(f"l1 linearization LP failed: {res.message}")
    best = res.fun
    # second stage over the optimal face: variables (theta, e, s), minimize s with e <= s
    A2 = np.block([
        [A, np.zeros((2 * X, 1))],
        [np.zeros((1, d)), np.ones((1, X)), np.zeros((1, 1))],
        [np.zeros((X, d)), eye, -np.ones((X, 1))],
    ])
    b2 = np.concatenate([b, [best * (1 + 1e-10) + 1e-13], np.zeros(X)])
    c2 = np.zeros(d + X + 1)
    c2[-1] = 1.0
    res2 = linprog(c2, A_ub=A2, b_ub=b2, bounds=bounds + [(0, None)], method="highs")
    theta = res2.x[:d] if res2.status == 0 else res.x[:d]
    d_tilde = mu @ theta
    resid = float(np.abs(d_tilde - d_hat).sum())
    if resid > best + 1e-9 * (1 + best):
        theta = res.x[:d]
        d_tilde = mu @ theta
        resid = float(np.abs(d_tilde - d_hat).sum())
    return L1Fit(d_tilde, theta, resid)
