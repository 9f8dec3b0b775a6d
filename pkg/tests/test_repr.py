import numpy as np
import pytest

from lowrank_occupancy.data import LevelBlock
from lowrank_occupancy.errors import InfeasibleClass
from lowrank_occupancy.estimators import LinearDensityClass, WeightClass, fit_weight, mle_fit, ratio_values
from lowrank_occupancy.harness.experiment import decoy_candidates
from lowrank_occupancy.linearize import l1_linearize
from lowrank_occupancy.mdp import MarkovPolicy, exact_occupancies
from lowrank_occupancy.representation import (
    FeatureCandidateSet,
    joint_feature_select,
    union_fit_weight,
    union_mle_density,
)
from lowrank_occupancy.sampling import sample_level_dataset

from conftest import random_mdp, random_policy


def test_union_mle_singleton_equals_mle():
    rng = np.random.default_rng(0)
    mu = rng.dirichlet(np.ones(5), size=2).T
    s = rng.choice(5, 300, p=mu @ [0.4, 0.6])
    u = union_mle_density(s, [mu])
    f = mle_fit(s, LinearDensityClass(mu))
    assert u.index == 0 and u.fit.density.tobytes() == f.density.tobytes()


def test_union_mle_symmetric_tie_picks_first():
    rng = np.random.default_rng(1)
    mu = rng.dirichlet(np.ones(4), size=2).T
    perm = [1, 0, 2, 3]
    s = np.array([0] * 30 + [1] * 30 + [2] * 25 + [3] * 15)
    u = union_mle_density(s, [mu, mu[perm]])
    assert u.fits[0].loglik == pytest.approx(u.fits[1].loglik, abs=1e-9)
    assert u.index == 0


def test_union_mle_prefers_truth_over_decoy():
    X = 6
    wins = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        truth = rng.dirichlet(np.ones(X), size=2).T
        truth[0] += 0.5  # make state 0 the mode
        truth /= truth.sum(0)
        decoy = rng.dirichlet(np.ones(X), size=2).T
        decoy[0] = 0.005  # the decoy cannot put much mass on the mode
        decoy /= decoy.sum(0)
        s = rng.choice(X, 10**4, p=truth @ [0.5, 0.5])
        u = union_mle_density(s, [decoy, truth])
        wins += u.index == 1 and u.fits[1].loglik > u.fits[0].loglik
    assert wins >= 9


def test_union_mle_all_infeasible():
    mu = np.array([[1.0], [0.0]])
    with pytest.raises(InfeasibleClass) as e:
        union_mle_density([1], [mu, mu])
    assert e.value.witness == {0: 1, 1: 1}


def test_union_mle_skips_infeasible_candidates():
    good = np.array([[0.5], [0.5]])
    bad = np.array([[1.0], [0.0]])
    u = union_mle_density([0, 1], [bad, good])
    assert u.index == 1 and u.fits[0] is None


def _block_from(m, seed, n=500):
    u = MarkovPolicy.uniform(m.horizon, m.num_states, m.num_actions)
    return sample_level_dataset(m, 1, [u], u, n, seed)


def test_union_fit_singleton_equals_fit():
    m = random_mdp(2, X=6, K=2, H=3, d=3)
    b = _block_from(m, 0)
    w_prev = np.random.default_rng(0).uniform(0, 2, 6)
    pibar = np.minimum(random_policy(m, 1).table[1], 2 * b.data_policy)
    u = union_fit_weight(b, w_prev, pibar, [m.mu[1]], 4.0, 4, 7)
    f = fit_weight(b, w_prev, pibar, WeightClass(m.mu[1], 4.0), 4, 7)
    assert u.index == 0 and u.fit.loss == f.loss
    assert u.fit.ratio.values().tobytes() == f.ratio.values().tobytes()


def test_union_fit_symmetric_tie():
    m = random_mdp(2, X=6, K=2, H=3, d=3)
    b = _block_from(m, 0)
    # the same feature listed twice fits identically; index 0 wins
    u = union_fit_weight(b, np.ones(6), b.data_policy, [m.mu[1], np.array(m.mu[1])], 4.0, 2, 3)
    assert u.losses[0] == u.losses[1] and u.index == 0


def test_union_fit_planted_with_decoy():
    rng = np.random.default_rng(4)
    X = 6
    F = rng.dirichlet(np.ones(X), size=2).T
    decoy = rng.dirichlet(np.ones(X), size=2).T
    w_star = ratio_values(F, [0.3, 1.4], [1.0, 0.2], 100.0)
    y = np.repeat(np.arange(X), 5)
    b = LevelBlock(0, y, np.zeros_like(y), y, np.ones((X, 1)), [], np.arange(y.size))
    u = union_fit_weight(b, w_star, np.ones((X, 1)), [decoy, F], 100.0, 8, 3)
    assert u.index == 1 and u.fit.loss <= 1e-8


def test_joint_select_exactly_linear():
    rng = np.random.default_rng(5)
    cands = [rng.dirichlet(np.ones(7), size=2).T for _ in range(3)]
    est = [cands[2] @ rng.random(2) for _ in range(4)]
    js = joint_feature_select(est, cands)
    assert js.index == 2 and js.max_residual < 1e-9
    assert np.allclose(np.array(js.d_tilde), np.array(est), atol=1e-9)


def test_joint_select_single_policy():
    rng = np.random.default_rng(6)
    cands = [rng.dirichlet(np.ones(7), size=2).T for _ in range(4)]
    e = rng.random(7)
    js = joint_feature_select([e], cands)
    assert js.index == int(np.argmin([l1_linearize(e, c).residual for c in cands]))


def test_joint_select_finds_truth_from_exact_occupancies():
    for seed in range(5):
        m = random_mdp(seed, X=9, K=2, H=4, d=3)
        pols = [random_policy(m, 100 + i) for i in range(8)]
        cands = decoy_candidates(m, 3, seed)
        h = 2
        est = [exact_occupancies(m, p)[h].values for p in pols]
        js = joint_feature_select(est, cands[h - 1])
        assert js.index == cands.truth_index
        assert js.max_residual < 1e-9
        others = np.delete(js.residuals.max(axis=1), js.index)
        assert others.min() > 1e-6


def test_joint_select_soundness():
    rng = np.random.default_rng(7)
    m = random_mdp(7, X=9, K=2, H=4, d=3)
    pols = [random_policy(m, i) for i in range(5)]
    cands = decoy_candidates(m, 3, 1)
    exact = [exact_occupancies(m, p)[2].values for p in pols]
    est = [e + rng.normal(scale=0.01, size=9) for e in exact]
    js = joint_feature_select(est, cands[1])
    truth_max = js.residuals[cands.truth_index].max()
    assert js.max_residual <= truth_max + 1e-12
    assert truth_max <= max(np.abs(a - b).sum() for a, b in zip(est, exact)) + 1e-9


def test_candidate_set_json(tmp_path):
    m = random_mdp(1)
    cands = decoy_candidates(m, 2, 3)
    p = tmp_path / "c.json"
    cands.save(p)
    back = FeatureCandidateSet.load(p)
    assert back.truth_index == cands.truth_index and back.max_size == 3
    for a, b in zip(cands.levels, back.levels):
        assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert cands.b_mu() == pytest.approx(m.rank)
