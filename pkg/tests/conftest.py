import numpy as np
import pytest

from lowrank_occupancy.harness.generators import DESK, MdpParams, PolicyParams, generate_policy_class, generate_random_lowrank_mdp
from lowrank_occupancy.mdp import LowRankMdp, MarkovPolicy


def identity_chain(num_states=2, num_actions=2, horizon=3, init=None):
    """P_h(x'|x,a) = 1[x' = x] with simplex (identity) features."""
    X = num_states
    phi = np.broadcast_to(np.eye(X)[None, :, None, :], (horizon, X, num_actions, X)).copy()
    mu = np.broadcast_to(np.eye(X), (horizon, X, X)).copy()
    d0 = np.full(X, 1.0 / X) if init is None else np.asarray(init, dtype=float)
    return LowRankMdp(phi, mu, d0)


def cyclic_shift(num_states=2, num_actions=1, horizon=2):
    X = num_states
    shift = np.roll(np.eye(X), 1, axis=1)  # row x is e_{x+1}
    phi = np.broadcast_to(shift[None, :, None, :], (horizon, X, num_actions, X)).copy()
    mu = np.broadcast_to(np.eye(X), (horizon, X, X)).copy()
    return LowRankMdp(phi, mu, np.eye(X)[0])


def random_mdp(seed, X=4, K=2, H=3, d=2):
    return generate_random_lowrank_mdp(MdpParams(X, K, H, d, seed=seed))


def random_policy(m, seed):
    rng = np.random.default_rng(seed)
    return MarkovPolicy(rng.dirichlet(np.ones(m.num_actions), size=(m.horizon, m.num_states)))


@pytest.fixture(scope="session")
def desk():
    m = generate_random_lowrank_mdp(DESK)
    return m, generate_policy_class(PolicyParams(count=8, seed=1), m)


# acceptance criteria append (label, passed, detail) here; printed at the end of the session
ACCEPTANCE_LINES = []


def record_criterion(label, passed, detail):
    line = f"{label}: {'PASS' if passed else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
