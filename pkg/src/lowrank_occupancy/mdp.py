"""Finite low-rank MDPs and their exact occupancy oracles.

States and actions are integer indexed.  A policy is stored as one table of
shape (H, X, K); all densities are plain vectors over states.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import LevelOutOfRange, ShapeMismatch

STRUCT_TOL = 1e-9
NEG_CLAMP = 1e-12


def _readonly(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LowRankMdp:
    """P_h(x'|x,a) = <phi[h, x, a], mu[h, x']> for h in [H].

    ``phi`` has shape (H, X, K, d), ``mu`` shape (H, X, d) and ``init_dist``
    shape (X,).  Transition entries in [-1e-12, 0) are clamped to zero at
    construction; a row is renormalized only when clamping touched it and its
    sum is already within tolerance of one, so genuine violations survive for
    :func:`validate_mdp` to report.
    """

    phi: np.ndarray
    mu: np.ndarray
    init_dist: np.ndarray
    transitions: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        phi = _readonly(self.phi)
        mu = _readonly(self.mu)
        d0 = _readonly(self.init_dist)
        if phi.ndim != 4 or mu.ndim != 3:
            raise ShapeMismatch("phi must be (H, X, K, d) and mu (H, X, d)")
        H, X, K, d = phi.shape
        if mu.shape != (H, X, d) or d0.shape != (X,):
            raise ShapeMismatch(f"inconsistent shapes phi={phi.shape} mu={mu.shape} d0={d0.shape}")
        P = np.einsum("hxai,hyi->hxay", phi, mu)
        tiny = (P < 0) & (P >= -NEG_CLAMP)
        if tiny.any():
            touched = tiny.any(axis=-1)
            P = np.where(tiny, 0.0, P)
            sums = P.sum(axis=-1)
            fix = touched & (np.abs(sums - 1.0) <= STRUCT_TOL)
            P[fix] /= sums[fix][:, None]
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "init_dist", d0)
        object.__setattr__(self, "transitions", _readonly(P))

    @property
    def horizon(self) -> int:
        return self.phi.shape[0]

    @property
    def num_states(self) -> int:
        return self.phi.shape[1]

    @property
    def num_actions(self) -> int:
        return self.phi.shape[2]

    @property
    def rank(self) -> int:
        return self.phi.shape[3]

    @property
    def b_mu(self) -> float:
        """max_h sum_x ||mu_h(x)||_1."""
        return float(np.abs(self.mu).sum(axis=(1, 2)).max())

    def check_level(self, h: int) -> None:
        if not 0 <= h < self.horizon:
            raise LevelOutOfRange(f"level {h} outside [0, {self.horizon})")

    # -- serialization -----------------------------------------------------

    def to_json(self) -> dict:
        return {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "horizon": self.horizon,
            "rank": self.rank,
            "phi": self.phi.tolist(),
            "mu": self.mu.tolist(),
            "init_dist": self.init_dist.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "LowRankMdp":
        m = cls(phi=np.asarray(doc["phi"]), mu=np.asarray(doc["mu"]), init_dist=np.asarray(doc["init_dist"]))
        declared = (doc.get("horizon"), doc.get("num_states"), doc.get("num_actions"), doc.get("rank"))
        actual = (m.horizon, m.num_states, m.num_actions, m.rank)
        if any(a is not None and a != b for a, b in zip(declared, actual)):
            raise ShapeMismatch(f"declared sizes {declared} disagree with arrays {actual}")
        return m

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path) -> "LowRankMdp":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class MarkovPolicy:
    """Non-stationary Markov policy; ``table[h, x]`` is a distribution over actions."""

    table: np.ndarray

    def __post_init__(self):
        t = _readonly(self.table)
        if t.ndim != 3:
            raise ShapeMismatch("policy table must be (H, X, K)")
        if (t < 0).any() or not np.allclose(t.sum(axis=-1), 1.0, rtol=0, atol=STRUCT_TOL):
            raise ValueError("Markov policy rows must be nonnegative and sum to one")
        object.__setattr__(self, "table", t)

    @property
    def horizon(self) -> int:
        return self.table.shape[0]

    def __getitem__(self, h):
        return self.table[h]

    @classmethod
    def uniform(cls, horizon, num_states, num_actions):
        return cls(np.full((horizon, num_states, num_actions), 1.0 / num_actions))

    @classmethod
    def deterministic(cls, actions, num_actions):
        actions = np.asarray(actions, dtype=int)
        return cls(np.eye(num_actions)[actions])


@dataclass(frozen=True)
class PseudoPolicy:
    """Like :class:`MarkovPolicy` but rows may carry total mass below one."""

    table: np.ndarray

    def __post_init__(self):
        t = _readonly(self.table)
        if t.ndim != 3:
            raise ShapeMismatch("pseudo-policy table must be (H, X, K)")
        if (t < 0).any() or (t.sum(axis=-1) > 1.0 + STRUCT_TOL).any():
            raise ValueError("pseudo-policy rows must be nonnegative with mass <= 1")
        object.__setattr__(self, "table", t)

    @property
    def horizon(self) -> int:
        return self.table.shape[0]

    def __getitem__(self, h):
        return self.table[h]


@dataclass(frozen=True)
class Occupancy:
    """State distribution at one level.  Clipped and estimated occupancies may be unnormalized."""

    level: int
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(self.values))

    @property
    def mass(self) -> float:
        return float(self.values.sum())


@dataclass(frozen=True)
class RewardFunction:
    table: np.ndarray  # (H, X, K), entries in [0, 1]

    def __post_init__(self):
        t = _readonly(self.table)
        if t.ndim != 3 or (t < 0).any() or (t > 1).any():
            raise ValueError("reward table must be (H, X, K) with entries in [0, 1]")
        object.__setattr__(self, "table", t)


def policy_level(pi, h):
    """The (X, K) action table of a policy, pseudo-policy or raw array at level h."""
    if isinstance(pi, (MarkovPolicy, PseudoPolicy)):
        return pi.table[h]
    arr = np.asarray(pi, dtype=np.float64)
    return arr[h] if arr.ndim == 3 else arr


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def validate_mdp(m: LowRankMdp, b_mu: float | None = None) -> list[str]:
    """Every violated structural constraint, with an (h, x, a) witness.  Empty when valid."""
    report = []
    P = m.transitions
    H, X, K = m.horizon, m.num_states, m.num_actions
    for h in range(H):
        for x in range(X):
            for a in range(K):
                row = P[h, x, a]
                if row.min() < -NEG_CLAMP:
                    y = int(row.argmin())
                    report.append(f"negative transition P_{h}({y}|{x},{a}) = {row[y]:.3e} at (h={h}, x={x}, a={a})")
                s = row.sum()
                if abs(s - 1.0) > STRUCT_TOL:
                    report.append(f"transition row sums to {s:.12g} at (h={h}, x={x}, a={a})")
                if np.abs(m.phi[h, x, a]).max() > 1.0 + STRUCT_TOL:
                    report.append(f"||phi||_inf > 1 at (h={h}, x={x}, a={a})")
    bound = m.b_mu if b_mu is None else b_mu
    for h in range(H):
        total = np.abs(m.mu[h]).sum()
        if total > bound + STRUCT_TOL:
            report.append(f"sum_x ||mu_{h}(x)||_1 = {total:.6g} exceeds B_mu = {bound:.6g} at (h={h})")
    d0 = m.init_dist
    if d0.min() < 0 or abs(d0.sum() - 1.0) > STRUCT_TOL:
        report.append("initial distribution is not a probability vector")
    return report


# ---------------------------------------------------------------------------
# flow operator and occupancy oracles
# ---------------------------------------------------------------------------


def bellman_flow(m: LowRankMdp, h: int, pi, d) -> np.ndarray:
    """(P^pi_h d)(x') = sum_{x,a} P_h(x'|x,a) pi_h(a|x) d(x)."""
    m.check_level(h)
    d = np.asarray(d, dtype=np.float64)
    return np.einsum("x,xa,xay->y", d, policy_level(pi, h), m.transitions[h])


def exact_occupancies(m: LowRankMdp, pi) -> list[Occupancy]:
    d = m.init_dist
    out = [Occupancy(0, d)]
    for h in range(1, m.horizon):
        d = bellman_flow(m, h - 1, pi, d)
        out.append(Occupancy(h, d))
    return out


def occupancy_matrix(occs) -> np.ndarray:
    return np.stack([o.values for o in occs])


def clipped_occupancies(m: LowRankMdp, pi, data_dists, data_policies, cx, ca) -> list[Occupancy]:
    """Recursively clipped occupancies.

    At each level the running density is capped at ``cx[h] * data_dists[h]``
    and the policy at ``ca[h] * data_policies[h]`` before pushing it one level
    forward.  All four lists are indexed by level and must have length H
    (entries for the last level are not used).
    """
    H = m.horizon
    for name, seq in (("data_dists", data_dists), ("data_policies", data_policies), ("cx", cx), ("ca", ca)):
        if len(seq) != H:
            raise ShapeMismatch(f"{name} has length {len(seq)}, expected horizon {H}")
    if min(cx) < 0 or min(ca) < 0:
        raise ValueError("clipping thresholds must be nonnegative")
    d = m.init_dist
    out = [Occupancy(0, d)]
    for h in range(1, H):
        k = h - 1
        pibar = np.minimum(policy_level(pi, k), ca[k] * policy_level(data_policies[k], k))
        d = bellman_flow(m, k, pibar, np.minimum(d, cx[k] * np.asarray(data_dists[k])))
        out.append(Occupancy(h, d))
    return out


def policy_return(m: LowRankMdp, pi, r: RewardFunction) -> float:
    occ = occupancy_matrix(exact_occupancies(m, pi))
    return plugin_return(occ, pi, r)


def plugin_return(occ, pi, r: RewardFunction) -> float:
    """sum_h sum_{x,a} d_h(x) R_h(x,a) pi_h(a|x) for any (H, X) density profile."""
    table = pi.table if isinstance(pi, (MarkovPolicy, PseudoPolicy)) else np.asarray(pi)
    return float(np.einsum("hx,hxa,hxa->", np.asarray(occ), r.table, table))


def mixture_occupancy(m: LowRankMdp, policies, h: int) -> np.ndarray:
    """Level-h state marginal of the uniform mixture over ``policies``."""
    return np.mean([exact_occupancies(m, p)[h].values for p in policies], axis=0)


def rollin_marginals(m: LowRankMdp, rollin, data_policy, h: int):
    """(d^D_h, d^{D,dagger}_h) for data rolled in with unif(rollin) then ``data_policy`` at h."""
    dD = mixture_occupancy(m, rollin, h)
    return dD, bellman_flow(m, h, policy_level(data_policy, h), dD)
