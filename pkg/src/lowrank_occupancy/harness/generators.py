"""Random simplex-feature MDPs and policy classes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..mdp import LowRankMdp, MarkovPolicy


@dataclass(frozen=True)
class MdpParams:
    num_states: int
    num_actions: int
    horizon: int
    rank: int
    seed: int = 0
    style: str = "simplex"  # simplex | identity
    concentration: float = 1.0  # Dirichlet parameter for the phi rows


DESK = MdpParams(num_states=9, num_actions=2, horizon=4, rank=3, seed=7)


def generate_random_lowrank_mdp(p: MdpParams) -> LowRankMdp:
    """mu_h columns are Dirichlet(1) distributions over states, phi_h(x, a) a Dirichlet point in the d-simplex.

    Every transition row is then a convex combination of the d columns, so the
    model is valid by construction and sum_x ||mu_h(x)||_1 = d.
    """
    X, K, H, d = p.num_states, p.num_actions, p.horizon, p.rank
    if min(X, K, H, d) < 1:
        raise ValueError("sizes must be positive")
    if d > X:
        raise ValueError(f"rank {d} exceeds the number of states {X}")
    if p.style == "identity" and d != X:
        raise ValueError("identity features need rank equal to the number of states")
    if p.style not in ("simplex", "identity"):
        raise ValueError(f"unknown feature style {p.style!r}")
    rng = np.random.default_rng(p.seed)
    if p.style == "identity":
        mu = np.broadcast_to(np.eye(X), (H, X, X)).copy()
    else:
        mu = np.transpose(rng.dirichlet(np.ones(X), size=(H, d)), (0, 2, 1))
    phi = rng.dirichlet(np.full(d, p.concentration), size=(H, X, K))
    d0 = rng.dirichlet(np.ones(X))
    return LowRankMdp(phi, mu, d0)


@dataclass(frozen=True)
class PolicyParams:
    count: int
    deterministic_fraction: float = 0.5
    temperature: float = 1.0
    seed: int = 0


def generate_policy_class(p: PolicyParams, mdp: LowRankMdp) -> list:
    """Random deterministic and softmax policies.

    Policies 0 and 1 are deterministic with different actions at every
    (h, x) when K >= 2, so the class always holds a disjoint-greedy pair.
    """
    if p.count < 1:
        raise ValueError("count must be at least 1")
    H, X, K = mdp.horizon, mdp.num_states, mdp.num_actions
    rng = np.random.default_rng(p.seed)
    base = rng.integers(0, K, size=(H, X))
    out = [MarkovPolicy.deterministic(base, K)]
    if p.count > 1:
        out.append(MarkovPolicy.deterministic((base + 1) % K, K))
    for _ in range(2, p.count):
        if rng.random() < p.deterministic_fraction:
            out.append(MarkovPolicy.deterministic(rng.integers(0, K, size=(H, X)), K))
        else:
            logits = rng.normal(size=(H, X, K)) / p.temperature
            e = np.exp(logits - logits.max(axis=-1, keepdims=True))
            out.append(MarkovPolicy(e / e.sum(axis=-1, keepdims=True)))
    return out
