"""Pytest configuration and shared fixtures."""
import numpy as np
import pytest

from mdp.generators import gen_garnet
from models import DeskScale, Policy, TabularMdp
from samplers.stream import SampleStream


def single_state_mdp(gamma: float = 0.5, cost: float = 1.0, n_actions: int = 1) -> TabularMdp:
    """One state, every action loops back to it."""
    return TabularMdp(
        transition=np.ones((1, n_actions, 1)),
        cost=np.full((1, n_actions), cost),
        gamma=gamma,
    )


def chain_mdp(P, gamma: float, cost=None) -> TabularMdp:
    """One-action MDP with state kernel P."""
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    cost = np.zeros((n, 1)) if cost is None else np.asarray(cost, dtype=float).reshape(n, 1)
    return TabularMdp(transition=P[:, None, :], cost=cost, gamma=gamma)


@pytest.fixture
def one_state_mdp():
    """1-state 1-action MDP with c = 1 and gamma = 0.5."""
    return single_state_mdp()


@pytest.fixture
def cycle_mdp():
    """2-state deterministic cycle with gamma = 0.5."""
    return chain_mdp([[0.0, 1.0], [1.0, 0.0]], gamma=0.5)


@pytest.fixture
def garnet():
    """Dense 4-state 2-action Garnet, irreducible under any positive policy."""
    return gen_garnet(4, 2, 4, seed=0, gamma=0.8)


@pytest.fixture
def garnet_5x3():
    return gen_garnet(5, 3, 3, seed=0, gamma=0.8)


@pytest.fixture
def constant_cost_mdp():
    """Dense 3-state 2-action Garnet with every cost equal to 0.5."""
    base = gen_garnet(3, 2, 3, seed=1, gamma=0.8)
    return TabularMdp(transition=base.transition, cost=np.full((3, 2), 0.5), gamma=base.gamma)


@pytest.fixture
def uniform_policy(garnet):
    return Policy.uniform(garnet.n_states, garnet.n_actions)


@pytest.fixture
def stream(garnet):
    return SampleStream(garnet, seed=0)


@pytest.fixture
def tiny_desk():
    """Smoke-test desk scale (mirrors the 'tiny' preset in benchmarks.yaml)."""
    return DeskScale(
        k_max=4,
        n_max=200,
        iota_factor=100,
        m_max=10,
        replicates=1,
        gap_replicates=2,
        eps_state_floor=0.2,
    )
