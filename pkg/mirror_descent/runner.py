"""Generic SPMD loop around a pluggable Q estimator."""
import logging
from typing import Callable, Optional, Sequence, Union

import numpy as np

from config import RUN_CONFIG
from mdp.oracles import optimality_gap, solve_optimal
from mirror_descent.prox import spmd_step
from models import EstimateResult, Policy, Regularizer, RunRecord, SpmdConfig, TabularMdp
from samplers.base import TrajectorySampler

logger = logging.getLogger(__name__)

QEstimator = Callable[[Policy, int], Union[np.ndarray, EstimateResult]]


class GapTracker:
    """Oracle-side diagnostics: l-infinity gap to V* and the mass kept on optimal actions."""

    def __init__(self, oracle: TabularMdp):
        self.oracle = oracle
        self.pi_star, self.v_star = solve_optimal(oracle)
        self.optimal_actions = np.argmax(self.pi_star.probs, axis=1)

    def gap(self, pi: Policy) -> float:
        return optimality_gap(self.oracle, pi, self.v_star)

    def min_optact_prob(self, pi: Policy) -> float:
        return float(pi.probs[np.arange(pi.n_states), self.optimal_actions].min())


def update_policy(pi: Policy, q: np.ndarray, h: Regularizer | None, eta: float, config: SpmdConfig) -> Policy:
    """Apply the prox step at every state."""
    rows = [
        spmd_step(pi.probs[s], q[s], h, eta, config.dgf, tol=config.bisection_tol)
        for s in range(pi.n_states)
    ]
    return Policy(probs=np.vstack(rows))


def spmd_run(
    source: Union[TabularMdp, TrajectorySampler],
    q_estimator: QEstimator,
    config: SpmdConfig,
    h: Regularizer | None = None,
    pi0: Optional[Policy] = None,
    oracle: Optional[TabularMdp] = None,
    diagnostics: Sequence[str] = (),
) -> tuple[Policy, RunRecord]:
    """
    Run config.k mirror-descent iterations and return the last iterate.

    Row t of the record describes pi_t together with the diagnostics the
    estimator reported while evaluating it. The last iterate's gap goes to
    the summary.

    Args:
        source: The MDP (generative or exact estimators) or a trajectory sampler
        q_estimator: Callback (pi, t) -> Q table or EstimateResult
        config: Stepsize schedule and prox settings
        h: Regularizer
        pi0: Starting policy (uniform by default)
        oracle: True model used only for gap diagnostics; defaults to source when it is an MDP
        diagnostics: Names of EstimateResult diagnostics to record

    Returns:
        Tuple of (final policy, per-iteration record)
    """
    if isinstance(source, TabularMdp):
        oracle = oracle or source
        n_states, n_actions = source.n_states, source.n_actions
        sampler = None
    else:
        sampler = source
        n_states, n_actions = source.n_states, source.n_actions

    pi = pi0 or Policy.uniform(n_states, n_actions)
    tracker = GapTracker(oracle) if oracle is not None and (h is None or h.is_none) else None
    record = RunRecord(columns=["iter", "samples_cum", *diagnostics, "gap_linf", "min_optact_prob"])
    start = sampler.counter if sampler is not None else 0
    samples = 0

    def observe(t: int, pi: Policy, diag: dict) -> None:
        used = sampler.counter - start if sampler is not None else samples
        record.append(
            iter=t,
            samples_cum=used,
            **{name: diag.get(name, float("nan")) for name in diagnostics},
            gap_linf=tracker.gap(pi) if tracker else float("nan"),
            min_optact_prob=tracker.min_optact_prob(pi) if tracker else float("nan"),
        )

    for t in range(config.k):
        estimate = q_estimator(pi, t)
        if isinstance(estimate, EstimateResult):
            q, diag = estimate.q, estimate.diagnostics
            samples += estimate.samples
        else:
            q, diag = np.asarray(estimate, dtype=float), {}
        observe(t, pi, diag)
        pi = update_policy(pi, q, h, config.eta(t), config)
        if RUN_CONFIG.debug:
            logger.info(f"[DEBUG] SPMD iteration {t}: gap={record.rows[-1]['gap_linf']:.6f}, diagnostics={diag}")
        elif t % 100 == 0:
            logger.debug(f"SPMD iteration {t}: gap={record.rows[-1]['gap_linf']:.6f}")

    final_gap = tracker.gap(pi) if tracker else float("nan")
    initial_gap = record.rows[0]["gap_linf"] if record.rows else final_gap
    record.summary.update(
        iterations=config.k,
        initial_gap=float(initial_gap),
        final_gap=float(final_gap),
        final_min_optact_prob=tracker.min_optact_prob(pi) if tracker else float("nan"),
        total_samples=int(sampler.counter - start if sampler is not None else samples),
    )
    logger.info(
        f"SPMD finished {config.k} iterations: gap {initial_gap:.6f} -> {final_gap:.6f}, "
        f"{record.summary['total_samples']} samples"
    )
    return pi, record
