"""Time the numba kernels against the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--episodes 200000]

The path is switched through LOWRANK_OCCUPANCY_NUMBA, the same flag the
library reads at call time.  The first numba call (JIT compile or cache load)
is excluded from the timings and reported separately.
"""
import argparse
import os
import time
import timeit

import numpy as np

from lowrank_occupancy import kernels
from lowrank_occupancy.harness.generators import DESK, PolicyParams, generate_policy_class, generate_random_lowrank_mdp
from lowrank_occupancy.mdp import MarkovPolicy
from lowrank_occupancy.sampling import sample_level_dataset
from lowrank_occupancy.spanner import exact_spanner


def _rollout_case(episodes, seed=0):
    rng = np.random.default_rng(seed)
    X, K, T, C = 9, 2, 4, 8
    init = np.cumsum(rng.dirichlet(np.ones(X)))
    pol = np.cumsum(rng.dirichlet(np.ones(K), size=(C, T, X)), axis=-1)
    trans = np.cumsum(rng.dirichlet(np.ones(X), size=(T, X, K)), axis=-1)
    u = rng.random((episodes, 2 + 2 * T))
    return lambda: kernels.rollout(init, pol, trans, u)


def _minor_case(n=24, k=4, seed=0):
    rng = np.random.default_rng(seed)
    B = rng.random((n, 12))
    gram = B @ B.T
    combos = kernels.all_subsets(n, k)
    return lambda: kernels.minor_volumes(gram, combos), len(combos)


def _dataset_case(episodes):
    m = generate_random_lowrank_mdp(DESK)
    pols = generate_policy_class(PolicyParams(8, seed=1), m)
    u = MarkovPolicy.uniform(m.horizon, m.num_states, m.num_actions)
    return lambda: sample_level_dataset(m, m.horizon - 2, pols, u, episodes, seed=3)


def _spanner_case(n=20, seed=0):
    rng = np.random.default_rng(seed)
    V = rng.dirichlet(np.ones(9), size=n)
    return lambda: exact_spanner(V)


def _time(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--episodes", type=int, default=200_000)
    a = ap.parse_args(argv)
    if not kernels.HAVE_NUMBA:
        print("numba is not importable; only the numpy path can be timed")

    minor, n_combos = _minor_case()
    cases = [
        (f"rollout ({a.episodes} episodes, H=4, 8 components)", _rollout_case(a.episodes)),
        (f"minor_volumes ({n_combos} 4x4 minors)", minor),
        (f"sample_level_dataset desk ({a.episodes // 4} tuples)", _dataset_case(a.episodes // 4)),
        ("exact_spanner (20 vectors in R^9)", _spanner_case()),
    ]
    saved = os.environ.get(kernels.ENV_FLAG)
    print(f"{'case':55s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    try:
        for name, fn in cases:
            os.environ[kernels.ENV_FLAG] = "0"
            t_np = _time(fn, a.repeat)
            if kernels.HAVE_NUMBA:
                os.environ[kernels.ENV_FLAG] = "1"
                t0 = time.perf_counter()
                fn()
                warm = time.perf_counter() - t0
                t_nb = _time(fn, a.repeat)
                print(f"{name:55s} {1e3 * t_np:10.2f} {1e3 * t_nb:10.2f} {t_np / t_nb:7.1f}x  (first call {1e3 * warm:.0f} ms)")
            else:
                print(f"{name:55s} {1e3 * t_np:10.2f} {'-':>10s} {'-':>8s}")
    finally:
        if saved is None:
            os.environ.pop(kernels.ENV_FLAG, None)
        else:
            os.environ[kernels.ENV_FLAG] = saved


if __name__ == "__main__":
    main()
