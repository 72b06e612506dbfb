"""Tabular auto-exploring SPMD: Tsallis mirror descent driven by TOMC with dynamic mixing times."""
import logging
import math
from typing import Optional

from errors import InvalidInputError
from linear_fa.exploration import perturb_action_policy
from mdp.mixing import b_bar
from mirror_descent.runner import QEstimator, spmd_run
from models import (
    DistanceGenerator,
    EstimateResult,
    ExplorationDifficulty,
    MixingProfile,
    Policy,
    Regularizer,
    RunRecord,
    SpmdConfig,
    TabularAutoConfig,
    TabularMdp,
    horizon_log,
    tsallis_index,
)
from samplers.base import TrajectorySampler
from samplers.tomc import collect_window

logger = logging.getLogger(__name__)

BIAS_SCALE = 36.0


def _iteration_count(gamma: float, n_actions: int, epsilon: float, p: float, M_h: float) -> float:
    q_bar = 1.0 / (1.0 - gamma)
    return (
        BIAS_SCALE ** 2 * n_actions ** (1.0 - p) * (q_bar ** 2 + M_h ** 2)
        / ((1.0 - gamma) ** 2 * (1.0 - p) * p * epsilon ** 2)
    )


def _rare_threshold(gamma: float, n_actions: int, n_states: int, k: int, delta: float) -> float:
    return (1.0 - gamma) / (
        n_actions * BIAS_SCALE ** 2 * math.log2(2.0 * n_states * k / delta) * horizon_log(gamma) ** 2
    )


def theorem_params(
    gamma: float,
    n_actions: int,
    n_states: int,
    epsilon: float,
    delta: float,
    M_h: float = 0.0,
) -> TabularAutoConfig:
    """Stepsize scale, iteration count, bias target and rarity threshold for accuracy epsilon."""
    q_bar = 1.0 / (1.0 - gamma)
    if not 0.0 < epsilon < q_bar:
        raise InvalidInputError(f"epsilon={epsilon} must lie in (0, {q_bar})")
    if not 0.0 < delta < 1.0:
        raise InvalidInputError(f"delta={delta} must lie in (0, 1)")
    p = tsallis_index(gamma)
    alpha = math.sqrt(n_actions ** (1.0 - p) / ((1.0 - p) * p * (q_bar ** 2 + M_h ** 2)))
    k = math.ceil(_iteration_count(gamma, n_actions, epsilon, p, M_h))
    return TabularAutoConfig(
        gamma=gamma,
        n_states=n_states,
        n_actions=n_actions,
        epsilon=epsilon,
        delta=delta,
        subgrad_bound=M_h,
        p=p,
        alpha=alpha,
        k=k,
        varsigma=(1.0 - gamma) * epsilon / BIAS_SCALE,
        underline_pi=_rare_threshold(gamma, n_actions, n_states, k, delta),
    )


def epsilon_for_iterations(gamma: float, n_actions: int, k: int, M_h: float = 0.0) -> float:
    """Largest epsilon for which theorem_params yields exactly k iterations."""
    p = tsallis_index(gamma)
    # k = ceil(K / eps^2); shrink slightly so the ceiling lands on k rather than k + 1
    return math.sqrt(_iteration_count(gamma, n_actions, 1.0, p, M_h) / k) * (1.0 + 1e-12)


def anytime_config(
    gamma: float,
    n_actions: int,
    n_states: int,
    iterations: int,
    delta: float,
    M_h: float = 0.0,
) -> TabularAutoConfig:
    """Anytime variant: k = iterations, epsilon = 1 / iterations, per-iteration targets via anytime_params."""
    if iterations < 4:
        raise InvalidInputError("mirror descent needs at least 4 iterations")
    base = theorem_params(gamma, n_actions, n_states, 1.0 / iterations, delta, M_h)
    return base.model_copy(update={
        "k": iterations,
        "underline_pi": _rare_threshold(gamma, n_actions, n_states, iterations, delta),
        "anytime": True,
    })


def anytime_params(config: TabularAutoConfig, t: int) -> tuple[float, float]:
    """(varsigma_t, underline_pi_t) with (k, epsilon) replaced by (t + 1, 1 / (t + 1))."""
    if not config.anytime:
        return config.varsigma, config.underline_pi
    k = t + 1
    varsigma = (1.0 - config.gamma) / (BIAS_SCALE * k)
    return varsigma, _rare_threshold(config.gamma, config.n_actions, config.n_states, k, config.delta)


def spmd_config(config: TabularAutoConfig) -> SpmdConfig:
    return SpmdConfig(
        alpha=config.alpha,
        k=config.k,
        schedule="anytime" if config.anytime else "constant",
        dgf=DistanceGenerator.tsallis(config.p),
    )


def tomc_estimator(stream: TrajectorySampler, config: TabularAutoConfig, budget: Optional[int] = None) -> QEstimator:
    """Callback collecting one dynamic-mixing window per iteration, within an optional total budget."""
    start = stream.counter

    def estimate(pi: Policy, t: int) -> EstimateResult:
        varsigma, underline_pi = anytime_params(config, t)
        remaining = None if budget is None else budget - (stream.counter - start)
        collection = collect_window(stream, pi, varsigma, underline_pi, max_window=remaining)
        return EstimateResult(q=collection.q, samples=collection.samples, diagnostics={"m_tilde": collection.m_used})

    return estimate


def epsilon_greedy_estimator(
    stream: TrajectorySampler,
    config: TabularAutoConfig,
    eps: float,
    budget: Optional[int] = None,
) -> QEstimator:
    """Comparison baseline: collect with (1 - eps) pi + eps * uniform instead of pi itself."""
    inner = tomc_estimator(stream, config, budget)

    def estimate(pi: Policy, t: int) -> EstimateResult:
        return inner(perturb_action_policy(pi, eps), t)

    return estimate


def run(
    stream: TrajectorySampler,
    config: TabularAutoConfig,
    budget: Optional[int] = None,
    oracle: Optional[TabularMdp] = None,
    h: Regularizer | None = None,
    estimator: Optional[QEstimator] = None,
) -> tuple[Policy, RunRecord]:
    """
    k iterations of dynamic-mixing collection followed by the Tsallis prox step at every state.

    Args:
        stream: Fresh trajectory sampler
        config: Parameters from theorem_params or anytime_config
        budget: Cap on the transitions this run may take
        oracle: True MDP for gap diagnostics (never read by the algorithm)
        h: Regularizer
        estimator: Replacement Q estimator (comparison hooks)

    Returns:
        Tuple of (last iterate, record with rows iter, samples_cum, m_tilde, gap_linf, min_optact_prob)
    """
    if budget is not None and budget <= 0:
        raise InvalidInputError(f"budget={budget} must be positive")
    logger.info(
        f"Tabular auto-exploration: k={config.k}, p={config.p:.4f}, alpha={config.alpha:.4f}, "
        f"anytime={config.anytime}"
    )
    estimator = estimator or tomc_estimator(stream, config, budget)
    policy, record = spmd_run(
        stream, estimator, spmd_config(config), h=h, oracle=oracle, diagnostics=("m_tilde",)
    )
    record.summary["epsilon"] = config.epsilon
    return policy, record


def d_expl(profile_star: MixingProfile, n_actions: int, n_pairs: int, delta: float, gamma: float) -> ExplorationDifficulty:
    """Algorithm-independent exploration difficulty of the optimal policy's chain."""
    rho = profile_star.rho
    nu = profile_star.nu_floor
    if nu <= 0.0 or rho >= 1.0:
        raise InvalidInputError(f"need a positive stationary floor and rho < 1 (nu={nu}, rho={rho})")
    b = b_bar(nu, rho)
    base = n_actions * math.log2(n_pairs / delta) / (1.0 - gamma)
    value = base ** (2 * b) / ((1.0 - rho) * nu ** 3)
    return ExplorationDifficulty(
        value=value,
        n_actions=n_actions,
        n_pairs=n_pairs,
        delta=delta,
        gamma=gamma,
        b_bar=b,
        rho_star=rho,
        nu_floor_star=nu,
    )


def iteration_sample_bound(
    varsigma: float,
    gamma: float,
    underline_pi: float,
    nu_floor: float,
    rho: float,
    delta_prime: float,
    C: float = 2.0,
) -> float:
    """High-probability bound on one dynamic mixing time given the chain's (C, rho, nu)."""
    lam = nu_floor * underline_pi
    L = math.log(4.0 * C / lam)
    slow = 2.0 * L * math.log(4.0 * L / ((1.0 - rho) * lam * delta_prime)) / (lam * (1.0 - rho))
    return math.log(BIAS_SCALE / (varsigma * (1.0 - gamma))) * max(2.0 / (1.0 - gamma), slow)


def algorithm_dependent_bound(config: TabularAutoConfig, nu_floor: float, rho_bar: float, C: float = 2.0) -> float:
    """Sum over iterations of iteration_sample_bound, evaluated with measured (nu, rho)."""
    if nu_floor <= 0.0 or not 0.0 <= rho_bar < 1.0:
        raise InvalidInputError("need nu_floor > 0 and rho_bar in [0, 1)")
    n_pairs = config.n_states * config.n_actions
    delta_prime = config.delta / (2.0 * n_pairs * config.k)
    if not config.anytime:
        per_iteration = iteration_sample_bound(
            config.varsigma, config.gamma, config.underline_pi, nu_floor, rho_bar, delta_prime, C
        )
        return config.k * per_iteration
    total = 0.0
    for t in range(config.k):
        varsigma, underline_pi = anytime_params(config, t)
        total += iteration_sample_bound(varsigma, config.gamma, underline_pi, nu_floor, rho_bar, delta_prime, C)
    return total
