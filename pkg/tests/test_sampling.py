import numpy as np

from lowrank_occupancy.mdp import MarkovPolicy, exact_occupancies, rollin_marginals
from lowrank_occupancy.sampling import derive_seed, sample_level_dataset

from conftest import identity_chain, random_mdp, random_policy


def test_deterministic_world_gives_identical_tuples():
    m = identity_chain(3, 2, 4, init=[0.0, 1.0, 0.0])
    pi = MarkovPolicy.deterministic(np.zeros((4, 3), dtype=int), 2)
    b = sample_level_dataset(m, 2, [pi], pi, 50, seed=1)
    assert set(b.x.tolist()) == {1} and set(b.a.tolist()) == {0} and set(b.x_next.tolist()) == {1}


def test_empirical_marginal_matches_rollin():
    m = random_mdp(3, X=2, K=2, H=3, d=2)
    u = MarkovPolicy.uniform(3, 2, 2)
    b = sample_level_dataset(m, 1, [u], u, 10**5, seed=4)
    dD, ddag = rollin_marginals(m, [u], u, 1)
    assert np.abs(np.bincount(b.x, minlength=2) / b.n - dD).sum() < 1e-2
    assert np.abs(np.bincount(b.x_next, minlength=2) / b.n - ddag).sum() < 1e-2


def test_mixture_rollin_marginal():
    m = random_mdp(6, X=4, K=2, H=4, d=2)
    pols = [random_policy(m, s) for s in range(3)]
    u = MarkovPolicy.uniform(4, 4, 2)
    b = sample_level_dataset(m, 2, pols, u, 10**5, seed=5)
    ref = np.mean([exact_occupancies(m, p)[2].values for p in pols], axis=0)
    assert np.abs(np.bincount(b.x, minlength=4) / b.n - ref).sum() < 2e-2


def test_same_seed_same_data():
    m = random_mdp(1)
    u = MarkovPolicy.uniform(3, 4, 2)
    a = sample_level_dataset(m, 1, [u], u, 500, seed=7)
    b = sample_level_dataset(m, 1, [u], u, 500, seed=7)
    c = sample_level_dataset(m, 1, [u], u, 500, seed=8)
    for f in ("x", "a", "x_next", "mle_idx", "reg_idx"):
        assert np.array_equal(getattr(a, f), getattr(b, f))
    assert not np.array_equal(a.x_next, c.x_next)


def test_split_sizes():
    m = random_mdp(1)
    u = MarkovPolicy.uniform(3, 4, 2)
    b = sample_level_dataset(m, 0, [u], u, 101, seed=0)
    assert (b.n_mle, b.n_reg) == (51, 50)
    b = sample_level_dataset(m, 0, [u], u, 100, seed=0, n_mle=30)
    assert (b.n_mle, b.n_reg) == (30, 70)
    assert np.intersect1d(b.mle_idx, b.reg_idx).size == 0


def test_derive_seed_distinct_streams():
    seeds = {derive_seed(0, h, k) for h in range(5) for k in range(3)}
    assert len(seeds) == 15
    assert derive_seed(3, 1, 2) == derive_seed(3, 1, 2)
