"""Statistical building blocks of the offline estimator.

* :func:`mle_density` maximizes the log-likelihood over a linear density class
  ``{mu @ theta : mu @ theta >= 0, sum = 1, |theta|_inf <= B}``.  The problem is
  concave; it is solved by a log-barrier Newton method in the null space of
  the equality constraints after an LP phase that finds a strictly interior
  point and detects implicit equalities.
* :func:`fit_weight` fits a capped ratio of two linear functions by squared
  loss.  For a fixed denominator the numerator is a weighted least-squares
  problem, so only the denominator is searched (Nelder-Mead, several restarts).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, minimize

from .errors import DataInconsistency, InfeasibleClass, OptimizerDivergence
from .mdp import MarkovPolicy, Occupancy, PseudoPolicy, bellman_flow, policy_level

ZERO_DEN = 1e-12
_IMPLICIT_TOL = 1e-10


# ---------------------------------------------------------------------------
# classes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearDensityClass:
    """Densities ``feature @ theta``; ``feature`` is (X, d) with one row per state."""

    feature: np.ndarray
    theta_inf_bound: float = 1.0

    def __post_init__(self):
        f = np.array(self.feature, dtype=np.float64)
        if f.ndim == 1:
            f = f[:, None]
        f.setflags(write=False)
        object.__setattr__(self, "feature", f)

    @classmethod
    def singleton(cls, density):
        """The class whose only member is ``density``."""
        return cls(np.asarray(density, dtype=np.float64)[:, None], 1.0)

    def contains(self, d, tol=1e-9) -> bool:
        d = np.asarray(d, dtype=np.float64)
        if d.min() < -tol or abs(d.sum() - 1) > tol:
            return False
        theta, *_ = np.linalg.lstsq(self.feature, d, rcond=None)
        if np.abs(self.feature @ theta - d).max() > tol:
            return False
        # members may have several representations; only one needs to be bounded
        res = linprog(np.zeros(self.feature.shape[1]), A_eq=self.feature, b_eq=d,
                      bounds=[(-self.theta_inf_bound, self.theta_inf_bound)] * self.feature.shape[1],
                      method="highs")
        return res.status == 0


@dataclass(frozen=True)
class WeightClass:
    feature: np.ndarray  # (X, d)
    cap: float


@dataclass(frozen=True)
class WeightRatio:
    """x -> <mu(x), theta_up> / <mu(x), theta_down>, 0 where the denominator vanishes, clamped to [-cap, cap]."""

    theta_up: np.ndarray
    theta_down: np.ndarray
    feature: np.ndarray
    cap: float

    def values(self) -> np.ndarray:
        return ratio_values(self.feature, self.theta_up, self.theta_down, self.cap)

    def __call__(self, x):
        return self.values()[x]


@dataclass(frozen=True)
class TabularWeight:
    """A weight given directly by its values; used by the exact oracle mode."""

    table: np.ndarray
    cap: float = np.inf

    def values(self) -> np.ndarray:
        return np.clip(np.asarray(self.table, dtype=np.float64), -self.cap, self.cap)

    def __call__(self, x):
        return self.values()[x]


@dataclass(frozen=True)
class ClipThresholds:
    cx: tuple
    ca: tuple

    def __post_init__(self):
        object.__setattr__(self, "cx", tuple(float(c) for c in self.cx))
        object.__setattr__(self, "ca", tuple(float(c) for c in self.ca))
        if min(self.cx + self.ca, default=0.0) < 0:
            raise ValueError("clipping thresholds must be nonnegative")

    @classmethod
    def constant(cls, horizon, cx, ca):
        return cls((cx,) * horizon, (ca,) * horizon)


def ratio_values(feature, theta_up, theta_down, cap):
    num = feature @ np.asarray(theta_up, dtype=np.float64)
    den = feature @ np.asarray(theta_down, dtype=np.float64)
    small = np.abs(den) < ZERO_DEN
    out = np.divide(num, den, out=np.zeros_like(num), where=~small)
    return np.clip(out, -cap, cap)


def _weight_vector(w):
    return w.values() if hasattr(w, "values") else np.asarray(w, dtype=np.float64)


# ---------------------------------------------------------------------------
# MLE over a linear density class
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MleFit:
    density: np.ndarray
    theta: np.ndarray
    loglik: float  # mean log-likelihood of the samples
    gap: float  # duality-gap bound of the barrier method at exit


def _inequalities(F, bound):
    """G z <= hv for: F_x z >= 0 (nonzero rows), -bound <= z <= bound."""
    X, d = F.shape
    live = np.flatnonzero(np.abs(F).max(axis=1) > 0)
    G = np.vstack([-F[live], np.eye(d), -np.eye(d)])
    hv = np.concatenate([np.zeros(live.size), np.full(2 * d, bound)])
    owner = np.concatenate([live, np.full(2 * d, -1)])  # state index for density rows
    return G, hv, owner


def _interior_point(G, hv, s, witness):
    """Strictly feasible point for the constraints that can be strict, and the implicit-equality mask."""
    m, d = G.shape
    unknown = np.ones(m, dtype=bool)
    points = []
    while unknown.any():
        k = int(unknown.sum())
        # variables (z, t_unknown); maximize sum t subject to G z + E t <= hv
        E = np.zeros((m, k))
        E[np.flatnonzero(unknown), np.arange(k)] = 1.0
        c = np.concatenate([np.zeros(d), -np.ones(k)])
        res = linprog(c, A_ub=np.hstack([G, E]), b_ub=hv,
                      A_eq=np.concatenate([s, np.zeros(k)])[None, :], b_eq=[1.0],
                      bounds=[(None, None)] * d + [(0.0, 1.0)] * k, method="highs")
        if res.status != 0:
            raise InfeasibleClass(witness, "density class is empty")
        z = res.x[:d]
        slack = hv - G @ z
        newly = unknown & (slack > _IMPLICIT_TOL)
        if not newly.any():
            break
        points.append(z)
        unknown &= ~newly
    if not points:
        # every inequality is tight on the whole feasible set
        points.append(z)
    return np.mean(points, axis=0), unknown


def mle_fit(samples, cls: LinearDensityClass, tol: float = 1e-9) -> MleFit:
    samples = np.asarray(samples, dtype=np.int64)
    if samples.size == 0:
        raise ValueError("MLE needs at least one sample")
    F = cls.feature
    X, d = F.shape
    counts = np.bincount(samples, minlength=X).astype(np.float64)
    wts = counts / counts.sum()
    obs = np.flatnonzero(counts > 0)
    zero_rows = obs[np.abs(F[obs]).max(axis=1) == 0]
    if zero_rows.size:
        raise InfeasibleClass(int(zero_rows[0]))
    s = F.sum(axis=0)
    G, hv, owner = _inequalities(F, cls.theta_inf_bound)
    z0, implicit = _interior_point(G, hv, s, int(obs[0]))
    dead = [int(x) for x in owner[implicit] if x >= 0 and counts[x] > 0]
    if dead:
        raise InfeasibleClass(dead[0])

    Eq = np.vstack([s[None, :], G[implicit]])
    rhs = np.concatenate([[1.0], hv[implicit]])
    # tidy the LP point onto the affine set if that keeps it strictly interior
    fix = np.linalg.lstsq(Eq, Eq @ z0 - rhs, rcond=None)[0]
    if np.all((hv - G @ (z0 - fix))[~implicit] > 0):
        z0 = z0 - fix
    _, sv, vt = np.linalg.svd(Eq)
    rank = int((sv > 1e-10 * max(sv.max(), 1.0)).sum())
    N = vt[rank:].T
    if N.shape[1] == 0:
        p = F @ z0
        return MleFit(p, z0, float(wts[obs] @ np.log(p[obs])), 0.0)

    A = G[~implicit] @ N
    b = hv[~implicit] - G[~implicit] @ z0
    Fo = F[obs] @ N
    fo = F[obs] @ z0
    wo = wts[obs]
    m = A.shape[0]
    y = np.zeros(N.shape[1])

    def barrier(y, t):
        sl = b - A @ y
        p = fo + Fo @ y
        if sl.min() <= 0 or p.min() <= 0:
            return np.inf
        return -t * (wo @ np.log(p)) - np.log(sl).sum()

    t = 1.0
    while True:
        for _ in range(100):
            sl = b - A @ y
            p = fo + Fo @ y
            grad = -t * (Fo.T @ (wo / p)) + A.T @ (1.0 / sl)
            hess = t * (Fo.T * (wo / p ** 2)) @ Fo + (A.T * (1.0 / sl ** 2)) @ A
            try:
                step = -np.linalg.solve(hess, grad)
            except np.linalg.LinAlgError:
                step = -np.linalg.lstsq(hess, grad, rcond=None)[0]
            dec = -grad @ step
            if dec / 2 <= 1e-13:
                break
            f0 = barrier(y, t)
            alpha = 1.0
            while alpha > 1e-14:
                f1 = barrier(y + alpha * step, t)
                if f1 <= f0 - 0.25 * alpha * dec:
                    break
                alpha *= 0.5
            else:
                break
            y = y + alpha * step
        if m / t < tol:
            break
        t *= 20.0
    z = z0 + N @ y
    p = F @ z
    return MleFit(p, z, float(wts[obs] @ np.log(p[obs])), m / t)


def mle_density(samples, cls: LinearDensityClass, tol: float = 1e-9) -> np.ndarray:
    return mle_fit(samples, cls, tol).density


# ---------------------------------------------------------------------------
# clipping and extraction
# ---------------------------------------------------------------------------


def clip_state_density(d, dD, cx):
    return np.minimum(np.asarray(d, dtype=np.float64), cx * np.asarray(dD, dtype=np.float64))


def clip_action_policy(pi, piD, ca):
    if ca < 0:
        raise ValueError("action threshold must be nonnegative")
    if isinstance(pi, MarkovPolicy) and isinstance(piD, MarkovPolicy):
        return PseudoPolicy(np.minimum(pi.table, ca * piD.table))
    return np.minimum(np.asarray(pi, dtype=np.float64), ca * np.asarray(piD, dtype=np.float64))


def extract_density(w, dDdag_hat, level: int = 0):
    """(Occupancy w * dDdag_hat with negative entries set to 0, number of entries clamped)."""
    prod = _weight_vector(w) * np.asarray(dDdag_hat, dtype=np.float64)
    neg = prod < 0
    return Occupancy(level, np.where(neg, 0.0, prod)), int(neg.sum())


# ---------------------------------------------------------------------------
# weight regression
# ---------------------------------------------------------------------------


def regression_targets(block, w_prev, pibar):
    """Per-sample w_prev(x) * pibar(a|x) / piD(a|x) on the regression split, plus next states."""
    x, a, y = block.reg_tuples()
    if x.size == 0:
        raise ValueError("regression split is empty")
    piD = block.data_policy
    pb = policy_level(pibar, block.h)
    den = piD[x, a]
    bad = np.flatnonzero(den <= 0)
    if bad.size:
        raise DataInconsistency(int(x[bad[0]]), int(a[bad[0]]))
    return np.asarray(w_prev, dtype=np.float64)[x] * pb[x, a] / den, y


def regression_loss(block, w_next, w_prev, pibar) -> float:
    T, y = regression_targets(block, w_prev, pibar)
    r = _weight_vector(w_next)[y] - T
    return float(np.mean(r * r))


@dataclass(frozen=True)
class WeightFit:
    ratio: WeightRatio
    loss: float
    slack: float  # loss minus the smallest loss any cap-respecting function attains on the data
    restart: int
    restart_losses: tuple = field(default=())


def _aggregate(T, y, X):
    n_y = np.bincount(y, minlength=X).astype(np.float64)
    s1 = np.bincount(y, weights=T, minlength=X)
    s2 = np.bincount(y, weights=T * T, minlength=X)
    return n_y, s1, s2


def capped_lower_bound(T, y, X, cap) -> float:
    """Smallest empirical squared loss over all functions with |w| <= cap."""
    n_y, s1, s2 = _aggregate(T, y, X)
    obs = n_y > 0
    c = np.clip(s1[obs] / n_y[obs], -cap, cap)
    return float((n_y[obs] * c * c - 2 * c * s1[obs] + s2[obs]).sum() / T.size)


def fit_weight(block, w_prev, pibar, cls: WeightClass, restarts: int = 8, seed: int = 0,
               init_down=None, tol: float = 1e-10) -> WeightFit:
    """Empirical squared-loss minimizer over capped feature ratios.

    Restart 0 starts the denominator at ``init_down`` (default: all ones);
    later restarts apply seeded log-normal perturbations to it.  Among all
    evaluated candidates the lowest loss wins, ties going to the earliest
    restart.
    """
    F = np.asarray(cls.feature, dtype=np.float64)
    X, d = F.shape
    cap = float(cls.cap)
    if not np.isfinite(cap) or cap < 0:
        raise ValueError("cap must be finite and nonnegative")
    T, y = regression_targets(block, w_prev, pibar)
    n = T.size
    n_y, s1, s2 = _aggregate(T, y, X)
    obs = np.flatnonzero(n_y > 0)
    lower = capped_lower_bound(T, y, X, cap)
    Fo, no, s1o, s2o = F[obs], n_y[obs], s1[obs], s2[obs]
    tbar = s1o / no

    def loss_of(vals):
        w = vals[obs]
        return float((no * w * w - 2 * w * s1o + s2o).sum() / n)

    def solve_up(th_down):
        v = Fo @ th_down
        ok = np.abs(v) >= ZERO_DEN
        if not ok.any():
            return np.zeros(d)
        rows = (np.sqrt(no[ok]) / v[ok])[:, None] * Fo[ok]
        return np.linalg.lstsq(rows, np.sqrt(no[ok]) * tbar[ok], rcond=None)[0]

    d0 = np.ones(d) if init_down is None else np.asarray(init_down, dtype=np.float64).copy()
    if cap == 0.0:
        r = WeightRatio(np.zeros(d), d0, F, 0.0)
        l0 = loss_of(r.values())
        return WeightFit(r, l0, l0 - lower, 0, (l0,))

    rng = np.random.default_rng(seed)
    best = [np.inf, None, None, -1]
    per_restart = []
    for r in range(max(1, restarts)):
        start = d0 if r == 0 else d0 * np.exp(rng.normal(0.0, 0.75, d)) * np.where(rng.random(d) < 0.1, -1.0, 1.0)
        local = [np.inf]

        def objective(th_down, r=r, local=local):
            up = solve_up(th_down)
            val = loss_of(ratio_values(F, up, th_down, cap))
            if not np.isfinite(val):
                raise OptimizerDivergence(r)
            local[0] = min(local[0], val)
            if val < best[0]:
                best[:] = [val, up, np.array(th_down), r]
            return val

        objective(start)
        minimize(objective, start, method="Nelder-Mead",
                 options={"xatol": tol, "fatol": tol * 1e-2, "maxiter": 300 * d, "maxfev": 400 * d})
        per_restart.append(local[0])
        if best[0] <= lower + 1e-15:
            break
    val, up, down, r = best
    ratio = WeightRatio(up, down, F, cap)
    return WeightFit(ratio, val, max(val - lower, 0.0), r, tuple(per_restart))


# ---------------------------------------------------------------------------
# population-level oracles (need the true model)
# ---------------------------------------------------------------------------


def bayes_weight(m, h, pibar, dD, w_prev, d_dag) -> np.ndarray:
    """P^{pibar}_h(dD * w_prev) / d_dag with 0/0 = 0: the population regression solution."""
    num = bellman_flow(m, h, pibar, np.asarray(dD) * np.asarray(w_prev))
    d_dag = np.asarray(d_dag, dtype=np.float64)
    return np.divide(num, d_dag, out=np.zeros_like(num), where=d_dag > 0)


def population_loss(m, h, w_next, w_prev, pibar, piD, dD) -> float:
    """E[(w_next(x') - w_prev(x) pibar(a|x)/piD(a|x))^2] with x ~ dD, a ~ piD, x' ~ P_h."""
    pb = policy_level(pibar, h)
    pd = policy_level(piD, h)
    ratio = np.divide(pb, pd, out=np.zeros_like(pb), where=pd > 0)
    target = np.asarray(w_prev)[:, None] * ratio  # (X, K)
    w = _weight_vector(w_next)
    resid = w[None, None, :] - target[:, :, None]
    mass = np.asarray(dD)[:, None, None] * pd[:, :, None] * m.transitions[h]
    return float((mass * resid ** 2).sum())
