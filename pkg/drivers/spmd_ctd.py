"""SPMD driven by robust CTD estimates under linear function approximation."""
import logging
import math
from typing import Callable, Optional

import numpy as np

from errors import InvalidInputError
from linear_fa.ctd import robust_ctd
from linear_fa.operator import build_weights, stepsize_cap
from mdp.oracles import exact_q
from mirror_descent.runner import spmd_run
from models import (
    DeskScale,
    DistanceGenerator,
    EstimateResult,
    FeatureMap,
    Policy,
    RunRecord,
    SpmdConfig,
    SpmdCtdConfig,
    TabularMdp,
    horizon_log,
    mixing_floor,
    tsallis_index,
)
from samplers.base import TrajectorySampler

logger = logging.getLogger(__name__)

OriginSelector = Callable[[int, TrajectorySampler], int]

SPMD_SCALE = 343.0
MIN_DESK_ITERATIONS = 4


def weight_floor(gamma: float, underline_kappa: float, n_actions: int) -> float:
    """(1 - gamma) kappa^2 / (4 |A|)."""
    return (1.0 - gamma) * underline_kappa ** 2 / (4.0 * n_actions)


def state_exploration(gamma: float, k: int, n_states: int, delta: float) -> float:
    if k == 0:
        return 0.0
    return (1.0 - gamma) / (SPMD_SCALE ** 2 * math.log2(2.0 * k * n_states / delta) * horizon_log(gamma) ** 2)


def replicate_count(k: int, delta: float) -> int:
    """ceil(log2(4k / delta)), at least 1."""
    if k == 0:
        return 1
    return max(1, math.ceil(math.log2(4.0 * k / delta)))


def synth_params(
    gamma: float,
    fmap: FeatureMap,
    n_actions: int,
    n_states: int,
    epsilon: float,
    delta: float,
    underline_kappa: float,
    f: float = 0.0,
) -> SpmdCtdConfig:
    """Every SPMD and CTD parameter implied by (epsilon, delta, kappa) at full theoretical scale."""
    if underline_kappa <= 0.0:
        raise InvalidInputError(f"underline_kappa={underline_kappa} must be positive")
    if not 0.0 < epsilon < 1.0 / (1.0 - gamma):
        raise InvalidInputError(f"epsilon={epsilon} must lie in (0, {1.0 / (1.0 - gamma)})")
    omega2 = fmap.omega ** 2
    p = tsallis_index(gamma)
    alpha = math.sqrt(n_actions ** (1.0 - p) / ((1.0 - gamma) ** 2 * (1.0 - p) * p))
    k = math.ceil(SPMD_SCALE ** 2 * n_actions ** (1.0 - p) / ((1.0 - gamma) ** 4 * (1.0 - p) * p * epsilon ** 2))

    w_floor = weight_floor(gamma, underline_kappa, n_actions)
    mu_floor = fmap.sigma_min ** 2 * w_floor
    T = math.ceil(4096.0 * omega2 / ((1.0 - gamma) ** 2 * mu_floor))
    iota = stepsize_cap(gamma, fmap.omega)
    log_arg = 2.0 * T * omega2 / ((1.0 - gamma) ** 4 * mu_floor * epsilon ** 2)
    N = math.ceil(5061.0 * T / w_floor * math.log2(log_arg))
    if gamma == 0.0:
        m = 1
    else:
        m_arg = (
            3.0 * 786.0 * 144.0 ** 2 * math.sqrt(n_states) * omega2 * (omega2 + 1.0) * T ** 2
            / (128.0 * (1.0 - gamma) ** 3 * mu_floor ** 2 * w_floor ** 2 * epsilon ** 2)
        )
        m = max(1, math.ceil(math.log(m_arg) / math.log(1.0 / gamma)))

    return SpmdCtdConfig(
        mode="theoretical",
        gamma=gamma,
        n_states=n_states,
        n_actions=n_actions,
        epsilon=epsilon,
        delta=delta,
        f=f,
        underline_kappa=underline_kappa,
        omega=fmap.omega,
        sigma_min=fmap.sigma_min,
        p=p,
        alpha=alpha,
        k=k,
        eta=alpha / math.sqrt(k),
        eps_state=state_exploration(gamma, k, n_states, delta),
        eps_action=(1.0 - gamma) * underline_kappa / 4.0,
        w_floor=w_floor,
        mu_floor=mu_floor,
        T=T,
        iota=iota,
        N=N,
        m=m,
        replicates=replicate_count(k, delta),
    )


def desk_params(config: SpmdCtdConfig, scale: DeskScale) -> SpmdCtdConfig:
    """
    Scale the theoretical parameters down to desk size.

    N stays a whole number of epochs T (recomputed for the scaled stepsize)
    unless n_max is below one epoch, and m never drops below the floor the
    CTD convergence guarantees need.
    """
    gamma = config.gamma
    if scale.k_max == 0:
        k = 0
    else:
        k = math.ceil(config.k * scale.k_factor)
        if scale.k_max is not None:
            k = min(k, scale.k_max)
        k = max(k, MIN_DESK_ITERATIONS)

    iota = config.iota * scale.iota_factor
    T = math.ceil(8.0 / ((1.0 - gamma) * iota * config.mu_floor))
    N = T * max(1, math.ceil(config.N * scale.n_factor / T))
    if scale.n_max is not None and N > scale.n_max:
        # n_max is absolute; below one epoch the epoch itself is cut to N
        N = (scale.n_max // T) * T if scale.n_max >= T else scale.n_max
        T = min(T, N)

    m = math.ceil(config.m * scale.m_factor)
    if scale.m_max is not None:
        m = min(m, scale.m_max)
    m = max(m, mixing_floor(gamma, config.omega, config.mu_floor, config.n_states))

    replicates = replicate_count(k, config.delta)
    if scale.replicates is not None:
        replicates = min(replicates, scale.replicates)

    eps_state = 0.0
    if config.eps_state:
        eps_state = scale.exploration(state_exploration(gamma, k, config.n_states, config.delta))

    desk = config.model_copy(update={
        "mode": "desk",
        "k": k,
        "eta": config.alpha / math.sqrt(k) if k else config.eta,
        "eps_state": eps_state,
        "T": T,
        "iota": iota,
        "N": N,
        "m": m,
        "replicates": replicates,
    })
    logger.debug(f"Desk parameters: k={k}, T={T}, N={N}, m={m}, iota={iota:.3e}, replicates={replicates}")
    return desk


def last_iterate_gap_bound(config: SpmdCtdConfig, eps_app: float = 0.0) -> float:
    """[epsilon + (36/(1-gamma) + eps_app) eps_app] (log2(8k|S|/delta))^2."""
    k = max(config.k, 1)
    factor = math.log2(8.0 * k * config.n_states / config.delta) ** 2
    return (config.epsilon + (36.0 / (1.0 - config.gamma) + eps_app) * eps_app) * factor


def spmd_ctd_run(
    stream: TrajectorySampler,
    fmap: FeatureMap,
    config: SpmdCtdConfig,
    s_or_selector: Optional[OriginSelector] = None,
    oracle: Optional[TabularMdp] = None,
    pi0: Optional[Policy] = None,
) -> tuple[Policy, RunRecord]:
    """
    k iterations of robust CTD evaluation followed by the Tsallis prox update.

    Args:
        stream: Trajectory sampler shared by every CTD replicate
        fmap: Feature map
        config: Parameters from synth_params, possibly desk-scaled
        s_or_selector: Callback (t, stream) -> origin state; defaults to the current state
        oracle: True MDP for diagnostics only
        pi0: Starting policy (uniform by default)

    Returns:
        Tuple of (last iterate, record with rows iter, samples_cum, q_est_error, kappa_floor_used, ...)
    """
    pi0 = pi0 or Policy.uniform(config.n_states, config.n_actions)
    diagnostics = ("q_est_error", "kappa_floor_used", "w_min")
    if config.k == 0:
        record = RunRecord(columns=["iter", "samples_cum", *diagnostics, "gap_linf", "min_optact_prob"])
        record.summary.update(iterations=0, total_samples=0)
        return pi0, record

    def estimate(pi: Policy, t: int) -> EstimateResult:
        s_or = s_or_selector(t, stream) if s_or_selector else stream.state
        robust = robust_ctd(stream, pi, fmap, config.ctd_config(s_or))
        diag = {"kappa_floor_used": config.underline_kappa, "q_est_error": float("nan"), "w_min": float("nan")}
        if oracle is not None:
            diag["q_est_error"] = float(np.max(np.abs(robust.q - exact_q(oracle, pi))))
            try:
                diag["w_min"] = build_weights(oracle, pi, fmap, s_or, config.f, config.eps_action).w_min
            except InvalidInputError as exc:
                logger.warning(f"w_min diagnostic skipped at iteration {t}: {exc}")
        return EstimateResult(q=robust.q, samples=robust.samples, diagnostics=diag)

    spmd = SpmdConfig(alpha=config.alpha, k=config.k, dgf=DistanceGenerator.tsallis(config.p))
    logger.info(
        f"SPMD+CTD ({config.mode}): k={config.k}, N={config.N}, m={config.m}, "
        f"replicates={config.replicates}, kappa={config.underline_kappa:.4g}"
    )
    policy, record = spmd_run(stream, estimate, spmd, pi0=pi0, oracle=oracle, diagnostics=diagnostics)
    record.summary["kappa_floor_used"] = config.underline_kappa
    return policy, record
