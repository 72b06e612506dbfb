"""Conditional temporal-difference (CTD) learning on a single trajectory."""
import logging
from typing import NamedTuple, Optional, Sequence

import numpy as np

from errors import InvalidInputError
from linear_fa.exploration import perturb_action_policy, perturb_state_policy
from models import CtdConfig, FeatureMap, Policy
from samplers.base import TrajectorySampler

logger = logging.getLogger(__name__)


class CtdResult(NamedTuple):
    q: np.ndarray
    theta: np.ndarray
    samples: int
    trace: Optional[np.ndarray]


class RobustEstimate(NamedTuple):
    q: np.ndarray
    samples: int
    index: int
    norms: list[float]


class ExplorationPolicies(NamedTuple):
    state: Policy
    action: Policy

    @classmethod
    def build(cls, pi: Policy, config: CtdConfig) -> "ExplorationPolicies":
        return cls(
            state=perturb_state_policy(pi, config.eps_state, pi.n_states),
            action=perturb_action_policy(pi, config.eps_action),
        )


def _aux_rng(stream: TrajectorySampler) -> np.random.Generator:
    rng = getattr(stream, "aux_rng", None)
    if rng is None:
        raise InvalidInputError("CTD needs a sampler with an auxiliary random generator")
    return rng


def sample_F_hat(
    stream: TrajectorySampler,
    pi: Policy,
    theta: np.ndarray,
    fmap: FeatureMap,
    config: CtdConfig,
    explore: Optional[ExplorationPolicies] = None,
) -> tuple[np.ndarray, int]:
    """
    One draw of the stochastic operator F-hat(theta).

    Step 1 rolls the state-exploration policy until the (randomized) origin
    state is current; step 2 follows pi for a geometric number of steps;
    step 3 plays an action-exploration action, observes the successor and
    draws the next action from pi without moving. A geometric draw of at
    least m short-circuits to the zero vector before any transition.

    Args:
        stream: Trajectory sampler with an auxiliary generator
        pi: Policy under evaluation
        theta: Current parameter
        fmap: Feature map
        config: CTD settings
        explore: Precomputed exploration policies for pi

    Returns:
        Tuple of (F-hat vector, transitions consumed)
    """
    rng = _aux_rng(stream)
    n_states, n_actions = pi.probs.shape
    origin = int(rng.integers(n_states)) if rng.random() < config.f else config.s_or
    horizon = int(rng.geometric(1.0 - stream.gamma)) - 1
    if horizon >= config.m:
        return np.zeros(fmap.dim), 0

    explore = explore or ExplorationPolicies.build(pi, config)
    start = stream.counter
    while stream.state != origin:
        stream.step(explore.state)
    for _ in range(horizon):
        stream.step(pi)
    tr = stream.act(stream.draw_action(explore.action))
    a_next = stream.draw_action(pi)

    phi_z = fmap.phi[tr.s * n_actions + tr.a]
    phi_next = fmap.phi[tr.s_next * n_actions + a_next]
    td = phi_z @ theta - tr.cost - stream.gamma * (phi_next @ theta)
    return phi_z * td, stream.counter - start


def ctd_solve(
    stream: TrajectorySampler,
    pi: Policy,
    fmap: FeatureMap,
    config: CtdConfig,
    keep_trace: bool = False,
) -> CtdResult:
    """2N CTD updates from theta_0 = 0, returning the average of theta_N..theta_{2N-1}."""
    if config.s_or >= pi.n_states:
        raise InvalidInputError(f"origin state {config.s_or} out of range")
    if fmap.n_pairs != pi.probs.size:
        raise InvalidInputError(f"feature map has {fmap.n_pairs} rows, policy covers {pi.probs.size} pairs")
    explore = ExplorationPolicies.build(pi, config)
    theta = np.zeros(fmap.dim)
    total = np.zeros(fmap.dim)
    trace = np.empty((2 * config.n_half + 1, fmap.dim)) if keep_trace else None
    start = stream.counter

    for t in range(2 * config.n_half):
        if trace is not None:
            trace[t] = theta
        if t >= config.n_half:
            total += theta
        f_hat, _ = sample_F_hat(stream, pi, theta, fmap, config, explore)
        theta = theta - config.iota * f_hat
    if trace is not None:
        trace[-1] = theta

    theta_avg = total / config.n_half if config.n_half else np.zeros(fmap.dim)
    q = (fmap.phi @ theta_avg).reshape(pi.probs.shape)
    samples = stream.counter - start
    logger.debug(f"CTD: {2 * config.n_half} updates, {samples} samples, |Q|_inf={np.abs(q).max():.4f}")
    return CtdResult(q=q, theta=theta_avg, samples=samples, trace=trace)


def ctd_run(stream: TrajectorySampler, pi: Policy, fmap: FeatureMap, config: CtdConfig) -> np.ndarray:
    """Averaged tail iterate Q-hat_{N,2N} as an (|S|, |A|) table."""
    return ctd_solve(stream, pi, fmap, config).q


def robust_min_norm(candidates: Sequence[np.ndarray]) -> np.ndarray:
    """Candidate with the smallest sup norm; ties go to the lowest index."""
    if len(candidates) == 0:
        raise InvalidInputError("robust_min_norm needs at least one candidate")
    norms = [float(np.max(np.abs(c))) for c in candidates]
    return np.asarray(candidates[int(np.argmin(norms))])


def robust_ctd(stream: TrajectorySampler, pi: Policy, fmap: FeatureMap, config: CtdConfig) -> RobustEstimate:
    """config.replicates sequential CTD runs aggregated by robust_min_norm."""
    start = stream.counter
    candidates = [ctd_run(stream, pi, fmap, config) for _ in range(config.replicates)]
    norms = [float(np.max(np.abs(c))) for c in candidates]
    index = int(np.argmin(norms))
    return RobustEstimate(q=candidates[index], samples=stream.counter - start, index=index, norms=norms)
