"""Offline occupancy estimation with recursive clipping.

The level loop alternates three steps.  It estimates the level's data marginals by
MLE, fits a capped importance weight by squared-loss regression against the
previous level's clipped estimate, and multiplies the weight into the estimated
next-state marginal.  The same core serves the known-feature estimator
(one candidate feature per level) and the union-class variant.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EstimationError, LowRankError, ShapeMismatch
from .estimators import (
    ClipThresholds,
    LinearDensityClass,
    TabularWeight,
    bayes_weight,
    clip_state_density,
    extract_density,
)
from .mdp import (
    LowRankMdp,
    Occupancy,
    clipped_occupancies,
    plugin_return,
    policy_level,
    rollin_marginals,
)
from .representation import FeatureCandidateSet, union_fit_weight, union_mle_density
from .sampling import derive_seed


@dataclass(frozen=True)
class ForcConfig:
    thresholds: ClipThresholds
    n_mle: int = 1000
    n_reg: int = 1000
    restarts: int = 8
    mle_tol: float = 1e-9
    reg_tol: float = 1e-10
    seed: int = 0
    oracle: bool = False  # exact marginals and Bayes weights from the model instead of data

    def __post_init__(self):
        if self.n_mle < 1 or self.n_reg < 1:
            raise ValueError("sample counts must be at least 1")


@dataclass(frozen=True)
class LevelMarginals:
    """Estimated (or exact) d^D_k and d^{D,dagger}_k for data block k."""

    k: int
    dD: np.ndarray
    d_dag: np.ndarray
    dD_index: int = 0
    dag_index: int = 0
    dag_thetas: tuple = ()  # per-candidate MLE coefficients of d_dag, for initializing weight fits
    dD_err: float | None = None
    dag_err: float | None = None


@dataclass
class LevelDiagnostics:
    h: int
    clipped_mass: float
    reg_loss: float
    reg_slack: float
    restart: int
    weight_index: int
    negatives_clamped: int
    dD_index: int
    dag_index: int
    mle_err: float | None = None  # ||d_hat^D - d^D||_1
    mle_dag_err: float | None = None  # ||d_hat^{D,dagger} - d^{D,dagger}||_1


@dataclass
class ForcOutput:
    estimates: list
    diagnostics: list = field(default_factory=list)
    weights: list = field(default_factory=list)  # per level h >= 1: fitted weight values over states
    targets: list = field(default_factory=list)  # per level h >= 1: regression target w~ over states
    marginals: list = field(default_factory=list)

    def profile(self) -> np.ndarray:
        return np.stack([o.values for o in self.estimates])

    def to_json(self, policy_id=None) -> dict:
        per_level = [{"h": 0, "d_hat": self.estimates[0].values.tolist(), "clipped_mass": 0.0, "reg_slack": 0.0}]
        for dg in self.diagnostics:
            row = {"h": dg.h, "d_hat": self.estimates[dg.h].values.tolist(), "clipped_mass": dg.clipped_mass,
                   "reg_slack": dg.reg_slack}
            if dg.mle_err is not None:
                row["mle_err"] = dg.mle_err
            per_level.append(row)
        return {"policy_id": policy_id, "per_level": per_level}


# ---------------------------------------------------------------------------
# marginals
# ---------------------------------------------------------------------------


def _density_candidates(ds, candidates, k):
    """Candidate classes for d^D_k: the initial distribution alone at k = 0, else level k-1 features."""
    if k == 0:
        return [LinearDensityClass.singleton(ds.init_dist)]
    return list(candidates[k - 1])


def estimate_marginals(ds, candidates, k: int, cfg: ForcConfig, mdp: LowRankMdp | None = None) -> LevelMarginals:
    block = ds[k]
    truth = None
    if mdp is not None and block.rollin:
        truth = rollin_marginals(mdp, block.rollin, block.data_policy, k)
    if cfg.oracle:
        if truth is None:
            raise LowRankError("oracle mode needs the model and an in-process dataset with roll-in provenance")
        return LevelMarginals(k, truth[0], truth[1], dD_err=0.0, dag_err=0.0)
    fD = union_mle_density(block.mle_states(), _density_candidates(ds, candidates, k), cfg.mle_tol)
    fG = union_mle_density(block.mle_next_states(), list(candidates[k]), cfg.mle_tol)
    thetas = tuple(None if f is None else f.theta for f in fG.fits)
    errs = (None, None)
    if truth is not None:
        errs = (float(np.abs(fD.fit.density - truth[0]).sum()), float(np.abs(fG.fit.density - truth[1]).sum()))
    return LevelMarginals(k, fD.fit.density, fG.fit.density, fD.index, fG.index, thetas, *errs)


def all_marginals(ds, candidates, cfg, horizon, mdp=None):
    return [estimate_marginals(ds, candidates, k, cfg, mdp) for k in range(horizon - 1)]


# ---------------------------------------------------------------------------
# level step and full loop
# ---------------------------------------------------------------------------


def regression_target(d_prev, dD, cx):
    """(d_prev ^ cx dD) / dD with 0/0 = 0."""
    dD = np.asarray(dD, dtype=np.float64)
    top = clip_state_density(d_prev, dD, cx)
    return np.divide(top, dD, out=np.zeros_like(top), where=dD > 0)


def forc_level_step(ds, pi, candidates, marg: LevelMarginals, d_prev, cx, ca, cfg: ForcConfig, h: int, mdp=None):
    """One pass of the loop body: returns (d_hat_h, diagnostics, weight values, target)."""
    k = h - 1
    block = ds[k]
    piD = block.data_policy
    pik = policy_level(pi, k)
    pibar = np.minimum(pik, ca * piD)
    w_tilde = regression_target(d_prev, marg.dD, cx)
    cap = cx * ca
    if cfg.oracle:
        w = TabularWeight(bayes_weight(mdp, k, pibar, marg.dD, w_tilde, marg.d_dag), cap)
        loss = slack = 0.0
        restart = widx = 0
    else:
        inits = marg.dag_thetas if marg.dag_thetas else None
        uw = union_fit_weight(block, w_tilde, pibar, list(candidates[k]), cap, cfg.restarts,
                              derive_seed(cfg.seed, h, 7), inits, cfg.reg_tol)
        w = uw.fit.ratio
        loss, slack, restart, widx = uw.fit.loss, uw.fit.slack, uw.fit.restart, uw.index
    occ, neg = extract_density(w, marg.d_dag, h)
    kept = clip_state_density(d_prev, marg.dD, cx)
    clipped = float(np.sum(d_prev) - kept.sum() + kept @ (pik - pibar).sum(axis=1))
    diag = LevelDiagnostics(h, clipped, loss, slack, restart, widx, neg, marg.dD_index, marg.dag_index,
                            marg.dD_err, marg.dag_err)
    return occ, diag, w.values(), w_tilde


def forc_core(ds, pi, candidates, cfg: ForcConfig, mdp=None, marginals=None) -> ForcOutput:
    H = pi.horizon if hasattr(pi, "horizon") else np.asarray(pi).shape[0]
    if len(ds) < H - 1:
        raise ShapeMismatch(f"dataset has {len(ds)} levels, need {H - 1}")
    if len(cfg.thresholds.cx) < H - 1 or len(cfg.thresholds.ca) < H - 1:
        raise ShapeMismatch("threshold lists shorter than the horizon")
    out = ForcOutput([Occupancy(0, ds.init_dist)])
    for h in range(1, H):
        k = h - 1
        try:
            marg = marginals[k] if marginals is not None else estimate_marginals(ds, candidates, k, cfg, mdp)
            occ, diag, wv, wt = forc_level_step(ds, pi, candidates, marg, out.estimates[k].values,
                                                cfg.thresholds.cx[k], cfg.thresholds.ca[k], cfg, h, mdp)
        except EstimationError:
            raise
        except LowRankError as e:
            raise EstimationError(h, e) from e
        out.estimates.append(occ)
        out.diagnostics.append(diag)
        out.weights.append(wv)
        out.targets.append(wt)
        out.marginals.append(marg)
    return out


def forc_estimate(ds, pi, mu, cfg: ForcConfig, mdp: LowRankMdp | None = None, marginals=None) -> ForcOutput:
    """Occupancy estimates of ``pi`` from level-indexed data with known density features ``mu`` (H, X, d)."""
    return forc_core(ds, pi, FeatureCandidateSet.known(mu), cfg, mdp, marginals)


def forcrl_estimate(ds, pi, candidates: FeatureCandidateSet, cfg: ForcConfig, mdp=None, marginals=None) -> ForcOutput:
    """As :func:`forc_estimate` with every class replaced by its union over the candidate features."""
    return forc_core(ds, pi, candidates, cfg, mdp, marginals)


# ---------------------------------------------------------------------------
# oracles and audits
# ---------------------------------------------------------------------------


def true_data_marginals(mdp, ds, horizon):
    """Exact (d^D_k, d^{D,dagger}_k) for every block used by a horizon-H run."""
    out = []
    for k in range(horizon - 1):
        b = ds[k]
        if not b.rollin:
            raise LowRankError("dataset block lacks roll-in provenance")
        out.append(rollin_marginals(mdp, b.rollin, b.data_policy, k))
    return out


def clipped_target(mdp, ds, pi, thresholds: ClipThresholds, truth=None):
    """Recursively clipped occupancies for the data distributions that generated ``ds``."""
    H = mdp.horizon
    truth = truth or true_data_marginals(mdp, ds, H)
    X, K = mdp.num_states, mdp.num_actions
    dists = [t[0] for t in truth] + [np.zeros(X)] * (H - len(truth))
    pols = [ds[k].data_policy for k in range(len(truth))] + [np.full((X, K), 1.0 / K)] * (H - len(truth))
    return clipped_occupancies(mdp, pi, dists, pols, list(thresholds.cx[:H]) + [0.0] * (H - len(thresholds.cx)),
                               list(thresholds.ca[:H]) + [0.0] * (H - len(thresholds.ca)))


@dataclass(frozen=True)
class AuditRecord:
    h: int
    lhs: float
    rhs: float
    terms: dict
    passed: bool
    strict: bool  # holds without the optimizer-slack term
    policy: int | None = None


AUDIT_TOL = 1e-9


def regression_decomposition_audit(mdp, ds, pi, cfg: ForcConfig, out: ForcOutput, policy=None, truth=None, dbar=None):
    """Check the per-level error recursion

    ||d_hat_h - dbar_h|| <= ||d_hat_{h-1} - dbar_{h-1}|| + 2 Cx ||d_hat^D - d^D|| + Cx Ca ||d_hat^dag - d^dag||
                           + sqrt(2) ||w_hat - w_bayes||_{2, d^dag} + slack

    with all norms l1 unless marked, and w_bayes the population regression
    solution for the estimated target.
    """
    H = len(out.estimates)
    truth = truth or true_data_marginals(mdp, ds, H)
    dbar = dbar if dbar is not None else np.stack([o.values for o in clipped_target(mdp, ds, pi, cfg.thresholds, truth)])
    recs = []
    prev = 0.0
    for h in range(1, H):
        k = h - 1
        cx, ca = cfg.thresholds.cx[k], cfg.thresholds.ca[k]
        dD, ddag = truth[k]
        marg = out.marginals[k]
        pibar = np.minimum(policy_level(pi, k), ca * ds[k].data_policy)
        bayes = bayes_weight(mdp, k, pibar, dD, out.targets[k], ddag)
        reg = math.sqrt(float(ddag @ (out.weights[k] - bayes) ** 2))
        terms = {
            "prev": prev,
            "mle": 2 * cx * float(np.abs(marg.dD - dD).sum()),
            "mle_dag": cx * ca * float(np.abs(marg.d_dag - ddag).sum()),
            "reg": math.sqrt(2) * reg,
            "slack": out.diagnostics[k].reg_slack,
        }
        lhs = float(np.abs(out.estimates[h].values - dbar[h]).sum())
        rhs = sum(terms.values())
        strict_rhs = rhs - terms["slack"]
        recs.append(AuditRecord(h, lhs, rhs, terms, lhs <= rhs + AUDIT_TOL, lhs <= strict_rhs + AUDIT_TOL, policy))
        prev = lhs
    return recs


# ---------------------------------------------------------------------------
# sample sizes and policy selection
# ---------------------------------------------------------------------------


def _with_log_n(base, inner):
    # n = base * log(inner * n), solved by fixed-point iteration
    n = base * math.log(inner)
    for _ in range(200):
        nxt = base * math.log(inner * max(n, 1.0))
        if abs(nxt - n) <= 1e-9 * n:
            return nxt
        n = nxt
    return n


def theoretical_sample_sizes(eps, delta, thresholds: ClipThresholds, d, H, b_mu=None, include_log_n=False,
                             num_candidates: int = 1):
    """(n_mle, n_reg) making the offline error bound at most eps at every level.

    Half of eps goes to each of the two terms of the unfolded bound
    ``sum_h Cx_h Ca_h (18 sqrt(d log(16 H Bmu n/delta)/n_mle) + 666 sqrt(d log(2 H n/delta)/n_reg))``.
    By default the ``n`` inside the logarithms is dropped so the result scales
    exactly as S^2/eps^2 with S = sum_h Cx_h Ca_h; ``include_log_n`` solves the
    self-consistent equation instead.  ``num_candidates`` (the largest per-level
    candidate-set size for union classes) enters both logarithms.
    """
    if not (0 < eps < 1 and 0 < delta < 1):
        raise ValueError("eps and delta must lie in (0, 1)")
    b_mu = float(d if b_mu is None else b_mu)
    S = sum(cx * ca for cx, ca in zip(thresholds.cx[:H], thresholds.ca[:H]))
    a_mle = d * (2 * 18 * S / eps) ** 2
    a_reg = d * (2 * 666 * S / eps) ** 2
    u = int(num_candidates)
    if include_log_n:
        return _with_log_n(a_mle, 16 * H * u * b_mu / delta), _with_log_n(a_reg, 2 * H * u / delta)
    return a_mle * math.log(16 * H * u * b_mu / delta), a_reg * math.log(2 * H * u / delta)


@dataclass(frozen=True)
class Selection:
    index: int
    values: np.ndarray

    def policy(self, policies):
        return policies[self.index]


def _profile(est):
    if isinstance(est, ForcOutput):
        return est.profile()
    if isinstance(est, (list, tuple)) and est and isinstance(est[0], Occupancy):
        return np.stack([o.values for o in est])
    return np.asarray(est, dtype=np.float64)


def plugin_values(outputs, rewards, policies) -> np.ndarray:
    if isinstance(outputs, dict):
        outputs = [outputs[i] for i in range(len(policies))]
    return np.array([plugin_return(_profile(o), p, rewards) for o, p in zip(outputs, policies)])


def pessimistic_policy_select(outputs, rewards, policies) -> Selection:
    """argmax of plug-in returns computed from clipped (hence pessimistic) estimates; lowest index wins ties."""
    if len(policies) == 0:
        raise ValueError("policy list is empty")
    v = plugin_values(outputs, rewards, policies)
    return Selection(int(np.argmax(v)), v)
