"""Hot inner loops, each with a numba and a pure-numpy implementation.

The numba path is used when numba imports and ``LOWRANK_OCCUPANCY_NUMBA`` is
not set to ``0``.  Both paths consume the same uniforms and the same
cumulative tables, so they return identical samples for a given seed.
"""
from __future__ import annotations

import os
from itertools import combinations

import numpy as np

ENV_FLAG = "LOWRANK_OCCUPANCY_NUMBA"

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


def numba_enabled() -> bool:
    return HAVE_NUMBA and os.environ.get(ENV_FLAG, "1").strip().lower() not in ("0", "false", "no", "off")


# ---------------------------------------------------------------------------
# categorical rollouts
# ---------------------------------------------------------------------------


@njit(cache=True)
def _draw(cdf_row, u):
    # index of the first cumulative entry strictly above u
    k = 0
    last = cdf_row.shape[0] - 1
    while k < last and cdf_row[k] <= u:
        k += 1
    return k


@njit(cache=True)
def _rollout_numba(init_cdf, policy_cdf, trans_cdf, uniforms):
    n = uniforms.shape[0]
    n_comp = policy_cdf.shape[0]
    steps = policy_cdf.shape[1]
    states = np.empty((n, steps + 1), dtype=np.int64)
    actions = np.empty((n, steps), dtype=np.int64)
    comps = np.empty(n, dtype=np.int64)
    for i in range(n):
        c = int(uniforms[i, 0] * n_comp)
        if c >= n_comp:
            c = n_comp - 1
        comps[i] = c
        x = _draw(init_cdf, uniforms[i, 1])
        states[i, 0] = x
        for t in range(steps):
            a = _draw(policy_cdf[c, t, x], uniforms[i, 2 + 2 * t])
            actions[i, t] = a
            x = _draw(trans_cdf[t, x, a], uniforms[i, 3 + 2 * t])
            states[i, t + 1] = x
    return states, actions, comps


def _draw_rows(cdf_rows, u):
    k = (cdf_rows[:, :-1] <= u[:, None]).sum(axis=1)
    return k.astype(np.int64)


def _rollout_numpy(init_cdf, policy_cdf, trans_cdf, uniforms):
    n = uniforms.shape[0]
    n_comp, steps = policy_cdf.shape[:2]
    states = np.empty((n, steps + 1), dtype=np.int64)
    actions = np.empty((n, steps), dtype=np.int64)
    comps = np.minimum((uniforms[:, 0] * n_comp).astype(np.int64), n_comp - 1)
    x = _draw_rows(np.broadcast_to(init_cdf, (n, init_cdf.shape[0])), uniforms[:, 1])
    states[:, 0] = x
    for t in range(steps):
        a = _draw_rows(policy_cdf[comps, t, x], uniforms[:, 2 + 2 * t])
        actions[:, t] = a
        x = _draw_rows(trans_cdf[t, x, a], uniforms[:, 3 + 2 * t])
        states[:, t + 1] = x
    return states, actions, comps


def rollout(init_cdf, policy_cdf, trans_cdf, uniforms):
    """Roll ``len(uniforms)`` episodes of a uniform mixture of Markov policies.

    ``policy_cdf`` has shape (components, steps, X, K) and ``trans_cdf`` shape
    (steps, X, K, X); both hold cumulative sums along the last axis.  Column 0
    of ``uniforms`` picks the mixture component, column 1 the initial state,
    and columns ``2+2t`` / ``3+2t`` the action and next state at step ``t``.
    Returns (states, actions, components).
    """
    args = (
        np.ascontiguousarray(init_cdf, dtype=np.float64),
        np.ascontiguousarray(policy_cdf, dtype=np.float64),
        np.ascontiguousarray(trans_cdf, dtype=np.float64),
        np.ascontiguousarray(uniforms, dtype=np.float64),
    )
    if numba_enabled():
        return _rollout_numba(*args)
    return _rollout_numpy(*args)


# ---------------------------------------------------------------------------
# principal-minor volumes for exhaustive spanner search
# ---------------------------------------------------------------------------


@njit(cache=True)
def _det_small(a):
    m = a.shape[0]
    a = a.copy()
    det = 1.0
    for j in range(m):
        p = j
        best = abs(a[j, j])
        for r in range(j + 1, m):
            if abs(a[r, j]) > best:
                best = abs(a[r, j])
                p = r
        if best == 0.0:
            return 0.0
        if p != j:
            for c in range(m):
                tmp = a[j, c]
                a[j, c] = a[p, c]
                a[p, c] = tmp
            det = -det
        det *= a[j, j]
        for r in range(j + 1, m):
            f = a[r, j] / a[j, j]
            for c in range(j, m):
                a[r, c] -= f * a[j, c]
    return det


@njit(cache=True)
def _minor_volumes_numba(gram, combos):
    n_sub, k = combos.shape
    out = np.empty(n_sub)
    sub = np.empty((k, k))
    for s in range(n_sub):
        for i in range(k):
            for j in range(k):
                sub[i, j] = gram[combos[s, i], combos[s, j]]
        out[s] = _det_small(sub)
    return out


def _minor_volumes_numpy(gram, combos, chunk=20000):
    out = np.empty(combos.shape[0])
    for start in range(0, combos.shape[0], chunk):
        c = combos[start:start + chunk]
        out[start:start + chunk] = np.linalg.det(gram[c[:, :, None], c[:, None, :]])
    return out


def minor_volumes(gram, combos):
    """det(G[S, S]) for every index row S of ``combos``; equals det(B B^T)."""
    gram = np.ascontiguousarray(gram, dtype=np.float64)
    combos = np.ascontiguousarray(combos, dtype=np.int64)
    if combos.shape[0] == 0:
        return np.empty(0)
    if numba_enabled():
        return _minor_volumes_numba(gram, combos)
    return _minor_volumes_numpy(gram, combos)


def all_subsets(n: int, k: int) -> np.ndarray:
    """Lexicographically ordered k-subsets of range(n) as an int array."""
    if k == 0:
        return np.zeros((1, 0), dtype=np.int64)
    return np.array(list(combinations(range(n), k)), dtype=np.int64).reshape(-1, k)
