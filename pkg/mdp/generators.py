"""Benchmark instance generators."""
import numpy as np

from errors import InvalidInputError
from models import Policy, TabularMdp

LEFT, RIGHT = 0, 1


def gen_garnet(n_states: int, n_actions: int, branching: int, seed: int, gamma: float = 0.9) -> TabularMdp:
    """Garnet MDP: every (s,a) has `branching` successors with Dirichlet(1) masses, costs U[0,1]."""
    if n_states < 1 or n_actions < 1:
        raise InvalidInputError("need at least one state and one action")
    if not 1 <= branching <= n_states:
        raise InvalidInputError(f"branching={branching} must lie in [1, {n_states}]")

    rng = np.random.default_rng(seed)
    transition = np.zeros((n_states, n_actions, n_states))
    for s in range(n_states):
        for a in range(n_actions):
            successors = rng.choice(n_states, size=branching, replace=False)
            masses = rng.dirichlet(np.ones(branching))
            transition[s, a, successors] = masses
    # Re-normalize so every row sums to 1 to machine precision
    transition /= transition.sum(axis=2, keepdims=True)
    cost = rng.uniform(0.0, 1.0, size=(n_states, n_actions))
    return TabularMdp(transition=transition, cost=cost, gamma=gamma)


def gen_hard_chain(n_states: int, slip: float, gamma: float = 0.9) -> TabularMdp:
    """River-swim style chain where only persistent RIGHT moves reach the free end state.

    LEFT moves deterministically toward state 0 and costs 1, except at state 0
    where it costs 0.95. RIGHT moves forward with probability 1 - slip and
    otherwise falls back one state; it costs 0 only at the last state.
    """
    if n_states < 2:
        raise InvalidInputError("a chain needs at least two states")
    if not 0.0 < slip < 1.0:
        raise InvalidInputError(f"slip={slip} must lie in (0, 1)")

    transition = np.zeros((n_states, 2, n_states))
    cost = np.ones((n_states, 2))
    for s in range(n_states):
        back = max(s - 1, 0)
        transition[s, LEFT, back] = 1.0
        forward = min(s + 1, n_states - 1)
        transition[s, RIGHT, forward] += 1.0 - slip
        transition[s, RIGHT, back] += slip
    cost[0, LEFT] = 0.95
    cost[n_states - 1, RIGHT] = 0.0
    return TabularMdp(transition=transition, cost=cost, gamma=gamma)


def random_policy(n_states: int, n_actions: int, seed: int, concentration: float = 1.0) -> Policy:
    """Rows drawn from Dirichlet(concentration); strictly positive almost surely."""
    rng = np.random.default_rng(seed)
    probs = rng.dirichlet(np.full(n_actions, concentration), size=n_states)
    probs = np.clip(probs, 1e-9, None)
    return Policy(probs=probs / probs.sum(axis=1, keepdims=True))


def anchored_policy(anchor: Policy, floor: float, seed: int) -> Policy:
    """Random policy keeping at least `floor` mass on the anchor's chosen actions."""
    if not 0.0 < floor <= 1.0:
        raise InvalidInputError(f"floor={floor} must lie in (0, 1]")
    noise = random_policy(anchor.n_states, anchor.n_actions, seed)
    return Policy(probs=floor * anchor.probs + (1.0 - floor) * noise.probs)
