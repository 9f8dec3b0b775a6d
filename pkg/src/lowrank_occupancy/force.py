"""Online policy-cover construction.

Level by level: pick a barycentric spanner of the current linearized
occupancy estimates, collect data from the uniform mixture of the spanner
policies followed by a uniform action, run one offline level step for every
policy in the class, and linearize the new estimates onto the level's
features.  Clipping uses state threshold d (the feature dimension) and action
threshold K throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import LevelBlock, TupleDataset
from .errors import EstimationError, LowRankError
from .estimators import ClipThresholds
from .forc import (
    ForcConfig,
    ForcOutput,
    Selection,
    estimate_marginals,
    forc_level_step,
    plugin_values,
    regression_decomposition_audit,
)
from .linearize import L1Fit, l1_linearize
from .mdp import LowRankMdp, Occupancy, clipped_occupancies, exact_occupancies, mixture_occupancy
from .representation import FeatureCandidateSet, joint_feature_select
from .sampling import derive_seed, sample_level_dataset
from .spanner import approx_spanner, exact_spanner

__all__ = ["ForceConfig", "ForceLevel", "ForceResult", "force_run", "forcrle_run", "l1_linearize",
           "online_policy_select", "missingness_audit", "force_regression_audit", "force_sample_sizes", "L1Fit"]


@dataclass(frozen=True)
class ForceConfig:
    policies: tuple
    n_mle: int = 1000
    n_reg: int = 1000
    restarts: int = 8
    seed: int = 0
    spanner: str = "exact"  # "exact" or "approx"
    spanner_c: float = 2.0
    mle_tol: float = 1e-9
    reg_tol: float = 1e-10
    oracle: bool = False

    def __post_init__(self):
        object.__setattr__(self, "policies", tuple(self.policies))
        if not self.policies:
            raise ValueError("policy class is empty")
        if self.spanner not in ("exact", "approx"):
            raise ValueError("spanner must be 'exact' or 'approx'")

    @classmethod
    def parse_spanner(cls, text: str):
        """'exact' -> ('exact', 2.0); 'approx:C' -> ('approx', C)."""
        if text == "exact":
            return "exact", 2.0
        if text.startswith("approx"):
            _, _, c = text.partition(":")
            return "approx", float(c) if c else 2.0
        raise ValueError(f"unknown spanner mode {text!r}")


@dataclass
class ForceLevel:
    h: int  # estimates produced at this level use data block h - 1
    explore: tuple  # indices into the policy class
    spanner_bound: float
    spanner_max_coef: float
    block: LevelBlock
    feature_index: int
    d_tilde: list  # per policy, level h - 1 vectors the spanner was built from
    theta: list  # per policy, coefficients of the level-h linearization
    residuals: list  # per policy, l1 linearization residual at level h
    diagnostics: list  # per policy LevelDiagnostics
    marginals: object = None


@dataclass
class ForceResult:
    estimates: dict  # (policy index, h) -> Occupancy
    levels: list = field(default_factory=list)
    weights: dict = field(default_factory=dict)  # (policy index, h) -> fitted weight values
    targets: dict = field(default_factory=dict)
    d_tilde: dict = field(default_factory=dict)  # (policy index, h) -> linearized estimate

    @property
    def deployments(self) -> int:
        return len(self.levels)

    def profile(self, i) -> np.ndarray:
        H = 1 + len(self.levels)
        return np.stack([self.estimates[(i, h)].values for h in range(H)])

    def dataset(self, init_dist, num_states, num_actions) -> TupleDataset:
        return TupleDataset(tuple(lv.block for lv in self.levels), init_dist, num_states, num_actions)

    def forc_output(self, i) -> ForcOutput:
        """Policy i's estimates and level diagnostics in offline-estimator form."""
        H = 1 + len(self.levels)
        return ForcOutput(
            [self.estimates[(i, h)] for h in range(H)],
            [lv.diagnostics[i] for lv in self.levels],
            [self.weights[(i, h)] for h in range(1, H)],
            [self.targets[(i, h)] for h in range(1, H)],
            [lv.marginals for lv in self.levels],
        )


def _spanner(vectors, cfg: ForceConfig):
    if cfg.spanner == "exact":
        return exact_spanner(vectors)
    return approx_spanner(vectors, cfg.spanner_c)


def _oracle_block(m, k, explore, piD):
    tables = tuple(p.table for p in explore)
    e = np.zeros(0, dtype=np.int64)
    return LevelBlock(k, e, e, e, piD, e, e, None, tables)


def force_core(m: LowRankMdp, candidates: FeatureCandidateSet, cfg: ForceConfig, joint: bool) -> ForceResult:
    H, X, K = m.horizon, m.num_states, m.num_actions
    d = candidates[0][0].shape[1] if len(candidates) else m.rank
    pols = cfg.policies
    P = len(pols)
    piD = np.full((X, K), 1.0 / K)
    thresholds = ClipThresholds.constant(H, float(d), float(K))
    fcfg = ForcConfig(thresholds, cfg.n_mle, cfg.n_reg, cfg.restarts, cfg.mle_tol, cfg.reg_tol, cfg.seed, cfg.oracle)
    res = ForceResult({(i, 0): Occupancy(0, m.init_dist) for i in range(P)})
    d_hat = [m.init_dist] * P
    d_tilde = [m.init_dist] * P
    for i in range(P):
        res.d_tilde[(i, 0)] = m.init_dist
    blocks = []
    for h in range(1, H):
        k = h - 1
        try:
            if k == 0:
                # every policy shares d_0, so the spanner is a single arbitrary member
                explore, bound, maxc = (0,), 1.0, 1.0
            else:
                sp = _spanner(d_tilde, cfg)
                explore, bound, maxc = sp.indices, sp.coefficient_bound, sp.max_coefficient
            rollin = [pols[i] for i in explore]
            if cfg.oracle:
                block = _oracle_block(m, k, rollin, piD)
            else:
                block = sample_level_dataset(m, k, rollin, piD, cfg.n_mle + cfg.n_reg,
                                             derive_seed(cfg.seed, h, 11), n_mle=cfg.n_mle)
            blocks.append(block)
            ds = TupleDataset(tuple(blocks), m.init_dist, X, K)
            marg = estimate_marginals(ds, candidates, k, fcfg, m)
        except LowRankError as e:
            raise EstimationError(h, e) from e
        new_hat, diags = [], []
        for i, pi in enumerate(pols):
            try:
                occ, diag, wv, wt = forc_level_step(ds, pi, candidates, marg, d_hat[i], float(d), float(K), fcfg, h, m)
            except LowRankError as e:
                raise EstimationError(h, e, policy=i) from e
            res.estimates[(i, h)] = occ
            res.weights[(i, h)] = wv
            res.targets[(i, h)] = wt
            new_hat.append(occ.values)
            diags.append(diag)
        if joint:
            js = joint_feature_select(new_hat, candidates[k])
            fidx, tilde, theta = js.index, list(js.d_tilde), list(js.theta)
            resid = [float(r) for r in js.residuals[fidx]]
        else:
            fits = [l1_linearize(v, candidates[k][0]) for v in new_hat]
            fidx, tilde, theta, resid = 0, [f.d_tilde for f in fits], [f.theta for f in fits], [f.residual for f in fits]
        res.levels.append(ForceLevel(h, tuple(explore), bound, maxc, block, fidx, list(d_tilde), theta, resid, diags, marg))
        for i in range(P):
            res.d_tilde[(i, h)] = tilde[i]
        d_hat, d_tilde = new_hat, tilde
    return res


def force_run(m: LowRankMdp, cfg: ForceConfig) -> ForceResult:
    """Known-feature online estimation of every policy's occupancies."""
    return force_core(m, FeatureCandidateSet.known(m.mu), cfg, joint=False)


def forcrle_run(m: LowRankMdp, candidates: FeatureCandidateSet, cfg: ForceConfig) -> ForceResult:
    """Online estimation with union classes and one jointly selected feature per level."""
    return force_core(m, candidates, cfg, joint=True)


def online_policy_select(estimates, rewards, policies) -> Selection:
    """argmax of plug-in returns; accepts a ForceResult or a list of per-policy profiles."""
    if len(policies) == 0:
        raise ValueError("policy list is empty")
    if isinstance(estimates, ForceResult):
        estimates = [estimates.profile(i) for i in range(len(policies))]
    v = plugin_values(estimates, rewards, policies)
    return Selection(int(np.argmax(v)), v)


# ---------------------------------------------------------------------------
# oracles and audits
# ---------------------------------------------------------------------------


def force_clipped_targets(m: LowRankMdp, res: ForceResult, policies):
    """Per-policy clipped occupancies under the data distributions the run actually used."""
    H, X, K = m.horizon, m.num_states, m.num_actions
    d = float(m.rank)
    dists = [mixture_occupancy(m, [policies[i] for i in lv.explore], lv.h - 1) for lv in res.levels]
    dists += [np.zeros(X)] * (H - len(dists))
    piD = [np.full((X, K), 1.0 / K)] * H
    return [np.stack([o.values for o in clipped_occupancies(m, p, dists, piD, [d] * H, [float(K)] * H)])
            for p in policies]


@dataclass(frozen=True)
class MissingnessRecord:
    h: int
    policy: int
    lhs: float
    rhs: float
    passed: bool


def missingness_audit(m: LowRankMdp, res: ForceResult, policies, dbar=None, tol=1e-9):
    """Check ||dbar_h - d_h|| <= ||dbar_{h-1} - d_{h-1}|| + 4 d max_pi' ||d_hat_{h-1} - dbar_{h-1}||."""
    dbar = dbar if dbar is not None else force_clipped_targets(m, res, policies)
    true = [np.stack([o.values for o in exact_occupancies(m, p)]) for p in policies]
    d = m.rank
    recs = []
    for lv in res.levels:
        h = lv.h
        worst = max(float(np.abs(res.estimates[(j, h - 1)].values - dbar[j][h - 1]).sum()) for j in range(len(policies)))
        for i in range(len(policies)):
            lhs = float(np.abs(dbar[i][h] - true[i][h]).sum())
            rhs = float(np.abs(dbar[i][h - 1] - true[i][h - 1]).sum()) + 4 * d * worst
            recs.append(MissingnessRecord(h, i, lhs, rhs, lhs <= rhs + tol))
    return recs


def force_regression_audit(m: LowRankMdp, res: ForceResult, policies):
    """The offline per-level error recursion, checked for every policy inside an online run."""
    H, X, K = m.horizon, m.num_states, m.num_actions
    ds = res.dataset(m.init_dist, X, K)
    cfg = ForcConfig(ClipThresholds.constant(H, float(m.rank), float(K)))
    recs = []
    for i, p in enumerate(policies):
        recs.extend(regression_decomposition_audit(m, ds, p, cfg, res.forc_output(i), policy=i))
    return recs


def force_sample_sizes(eps, delta, d, K, H, n_policies, b_mu=None, num_candidates: int = 1):
    """(n_mle, n_reg) making the online error bound at most eps at every level, logs in n dropped.

    The bound is ``90 h^2 d^1.5 K sqrt(log(16 H Bmu/delta)/n_mle) + 3330 h^2 d^2.5 K sqrt(log(2 |Pi| H/delta)/n_reg)``
    at the deepest estimated level h = H - 1, with eps split evenly between the terms.
    For union classes ``num_candidates`` multiplies the arguments of both logarithms.
    """
    if not (0 < eps < 1 and 0 < delta < 1):
        raise ValueError("eps and delta must lie in (0, 1)")
    b_mu = float(d if b_mu is None else b_mu)
    h = max(H - 1, 1)
    n_mle = (2 * 90 * h * h * d ** 1.5 * K / eps) ** 2 * math.log(16 * H * num_candidates * b_mu / delta)
    n_reg = (2 * 3330 * h * h * d ** 2.5 * K / eps) ** 2 * math.log(2 * n_policies * num_candidates * H / delta)
    return n_mle, n_reg
