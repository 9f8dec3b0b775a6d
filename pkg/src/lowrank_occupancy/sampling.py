"""Seeded trajectory and dataset sampling on top of the rollout kernel."""
from __future__ import annotations

import numpy as np

from . import kernels
from .data import LevelBlock
from .mdp import LowRankMdp, MarkovPolicy, policy_level


def derive_seed(seed, *keys) -> int:
    """Independent 63-bit seed for the stream identified by ``keys``."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *[int(k) for k in keys]])
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


def _cdf(p):
    c = np.cumsum(p, axis=-1)
    c[..., -1] = np.maximum(c[..., -1], 1.0)
    return c


def _tables(policies):
    return np.stack([p.table if isinstance(p, MarkovPolicy) else np.asarray(p, dtype=np.float64) for p in policies])


def sample_level_dataset(m: LowRankMdp, h: int, rollin, data_policy, n: int, seed: int, n_mle: int | None = None) -> LevelBlock:
    """n i.i.d. tuples (x_h, a_h, x_{h+1}).

    Each episode picks a roll-in component uniformly, follows it for levels
    0..h-1, then takes a_h from the data policy.  The first ``n_mle`` indices
    of a seeded permutation form the MLE split and the rest the regression
    split (default split 1:1).
    """
    m.check_level(h)
    if n < 1:
        raise ValueError("n must be at least 1")
    rollin = list(rollin)
    if not rollin:
        raise ValueError("roll-in mixture is empty")
    tables = _tables(rollin)
    piD = policy_level(data_policy, h)
    comp = np.concatenate([tables[:, :h], np.broadcast_to(piD, (len(rollin), 1) + piD.shape)], axis=1)
    rng = np.random.default_rng(derive_seed(seed, h, 0))
    u = rng.random((n, 2 + 2 * (h + 1)))
    states, actions, _ = kernels.rollout(_cdf(m.init_dist), _cdf(comp), _cdf(m.transitions[: h + 1]), u)
    n_mle = (n + 1) // 2 if n_mle is None else int(n_mle)
    if not 0 <= n_mle <= n:
        raise ValueError("n_mle must lie in [0, n]")
    perm = np.random.default_rng(derive_seed(seed, h, 1)).permutation(n)
    return LevelBlock(
        h=h,
        x=states[:, h],
        a=actions[:, h],
        x_next=states[:, h + 1],
        data_policy=piD,
        mle_idx=np.sort(perm[:n_mle]),
        reg_idx=np.sort(perm[n_mle:]),
        seed=int(seed),
        rollin=tuple(tables),
    )


def sample_trajectories(m: LowRankMdp, policies, n: int, seed: int):
    """Full episodes of the uniform mixture over ``policies``: (states (n, H), actions (n, H))."""
    tables = _tables(policies if isinstance(policies, (list, tuple)) else [policies])
    rng = np.random.default_rng(derive_seed(seed, 0, 2))
    u = rng.random((n, 2 + 2 * m.horizon))
    states, actions, _ = kernels.rollout(_cdf(m.init_dist), _cdf(tables), _cdf(m.transitions), u)
    return states[:, : m.horizon], actions
