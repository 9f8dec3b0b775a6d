"""Objectives over occupancy profiles and plug-in maximization over a policy class."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ObjectiveError
from .forc import Selection, _profile
from .mdp import RewardFunction, plugin_return


def simplex_project(d) -> np.ndarray:
    """Euclidean projection onto the probability simplex (Michelot's active-set iteration)."""
    d = np.asarray(d, dtype=np.float64)
    active = np.arange(d.size)
    while True:
        tau = (d[active].sum() - 1.0) / active.size
        keep = d[active] - tau > 0
        if keep.all():
            break
        active = active[keep]
    return np.maximum(d - tau, 0.0)


@dataclass(frozen=True)
class OccupancyObjective:
    """f(profile, policy) with a declared l1 Lipschitz constant in the profile.

    ``profile`` is an (H, X) array of per-level state vectors.  Objectives that
    do not depend on the policy ignore the second argument.
    """

    evaluator: Callable
    lipschitz_constant: float
    name: str = "custom"
    needs_distribution: bool = False

    def __call__(self, profile, policy=None) -> float:
        return float(self.evaluator(np.asarray(profile, dtype=np.float64), policy))


def spot_check_lipschitz(obj: OccupancyObjective, horizon, num_states, num_actions=2, samples=10, seed=0):
    """Largest |f(a) - f(b)| / sum_h ||a_h - b_h||_1 over random profile pairs; raises if above L."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        a = rng.dirichlet(np.ones(num_states), size=horizon)
        b = rng.dirichlet(np.ones(num_states), size=horizon)
        b = a + rng.uniform(0.01, 1.0) * (b - a)
        pol = rng.dirichlet(np.ones(num_actions), size=(horizon, num_states))
        dist = np.abs(a - b).sum()
        if dist == 0:
            continue
        worst = max(worst, abs(obj(a, pol) - obj(b, pol)) / dist)
    if worst > obj.lipschitz_constant * (1 + 1e-9) + 1e-12:
        raise ValueError(f"objective {obj.name!r} violates its Lipschitz constant: ratio {worst:.4g} > {obj.lipschitz_constant}")
    return worst


def register_objective(evaluator, lipschitz_constant, name, horizon, num_states, num_actions=2, seed=0, **kw):
    obj = OccupancyObjective(evaluator, float(lipschitz_constant), name, **kw)
    spot_check_lipschitz(obj, horizon, num_states, num_actions, seed=seed)
    return obj


def return_objective(reward: RewardFunction) -> OccupancyObjective:
    def f(profile, policy):
        return plugin_return(profile, policy, reward)

    return OccupancyObjective(f, float(reward.table.max()), "return")


def l2_match_objective(target) -> OccupancyObjective:
    """-||d_{H-1} - target||_2^2."""
    t = np.asarray(target, dtype=np.float64)

    def f(profile, policy):
        r = profile[-1] - t
        return -float(r @ r)

    return OccupancyObjective(f, 2.0, "l2-match")


def neg_entropy_objective(eta: float = 1e-2) -> OccupancyObjective:
    """sum_h sum_x (d + eta) log(d + eta): smoothed negative entropy, maximized by concentrated occupancies."""

    def f(profile, policy):
        p = np.maximum(profile, 0.0) + eta
        return float((p * np.log(p)).sum())

    return OccupancyObjective(f, abs(math.log(eta)) + 1.0, "neg-entropy", needs_distribution=True)


def plugin_objective_select(estimates, obj: OccupancyObjective, policies, project: bool | None = None) -> Selection:
    """argmax_pi f(estimated profile of pi); lowest index wins ties.

    Estimates are projected onto the simplex level by level when ``project`` is
    true (default: when the objective needs valid distributions).  Offline
    pessimistic use should pass ``project=False``.
    """
    if len(policies) == 0:
        raise ValueError("policy list is empty")
    project = obj.needs_distribution if project is None else project
    vals = []
    for i, (est, pol) in enumerate(zip(estimates, policies)):
        prof = _profile(est)
        if project:
            prof = np.stack([simplex_project(row) for row in prof])
        v = obj(prof, pol)
        if not np.isfinite(v):
            raise ObjectiveError(i, v)
        vals.append(v)
    vals = np.array(vals)
    return Selection(int(np.argmax(vals)), vals)
