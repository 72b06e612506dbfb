"""Advantage-gap certificate: exact gap oracle, Monte-Carlo gap estimate and the termination test."""
import logging
import math
from typing import Optional, Sequence

import numpy as np

from errors import InvalidInputError
from mdp.oracles import exact_q
from mirror_descent.prox import best_response
from models import DeskScale, GapEstimate, Policy, Regularizer, TabularMdp
from samplers.base import TrajectorySampler
from samplers.tomc import two_phase_collect

logger = logging.getLogger(__name__)


def exact_gap(mdp: TabularMdp, pi: Policy, h: Regularizer | None = None) -> np.ndarray:
    """g(s) = V(s) + h(pi(.|s)) - min_p {<Q(s,.), p> + h(p)}."""
    h = h or Regularizer.none()
    Q = exact_q(mdp, pi, h)
    V = np.einsum("sa,sa->s", Q, pi.probs)
    h_pi = np.asarray(h.evaluate(pi.probs))
    best = np.empty(mdp.n_states)
    for s in range(mdp.n_states):
        p = best_response(Q[s], h)
        best[s] = Q[s] @ p + h.evaluate(p)
    return V + h_pi - best


def gap_from_estimates(q_samples: Sequence[np.ndarray], pi: Policy, varsigma: float = 0.0, samples: int = 0) -> GapEstimate:
    """Average the centred advantages of M Q estimates and take max_a of their negation per state."""
    q = np.asarray(q_samples, dtype=float)
    if q.ndim == 2:
        q = q[None]
    if q.shape[1:] != pi.probs.shape:
        raise InvalidInputError(f"Q estimates of shape {q.shape[1:]} do not match policy {pi.probs.shape}")
    psi = q - np.einsum("msa,sa->ms", q, pi.probs)[:, :, None]
    g = np.max(-psi.mean(axis=0), axis=1)
    return GapEstimate(g=g, M=q.shape[0], varsigma=varsigma, samples=samples)


def estimate_gap(
    stream: TrajectorySampler,
    pi: Policy,
    varsigma: float,
    M: int,
    eps_state: float,
    underline_pi: Optional[float] = None,
    max_window: Optional[int] = None,
) -> GapEstimate:
    """
    Two-phase Monte-Carlo estimate of the advantage gap from M independent Q estimates.

    Args:
        stream: Trajectory sampler
        pi: Policy to certify
        varsigma: Per-entry bias target of each Q estimate
        M: Number of Q estimates averaged
        eps_state: Exploration strength used to reach rare pairs
        underline_pi: Rarity threshold (eps_state by default)
        max_window: Optional cap on any single collection

    Returns:
        GapEstimate with per-state values and the transitions consumed
    """
    if M < 1:
        raise InvalidInputError(f"M={M} must be at least 1")
    start = stream.counter
    q_samples = []
    for _ in range(M):
        q_samples.append(two_phase_collect(stream, pi, varsigma, eps_state, underline_pi, max_window).q)
    estimate = gap_from_estimates(q_samples, pi, varsigma, stream.counter - start)
    logger.debug(f"Gap estimate: max g={estimate.g_max:.6f} from M={M} ({estimate.samples} samples)")
    return estimate


def certificate_threshold(epsilon: float, k: int, n_pairs: int, delta: float) -> float:
    """4 epsilon (log2(8 |Z| k / delta))^2."""
    return 4.0 * epsilon * math.log2(8.0 * n_pairs * max(k, 1) / delta) ** 2


def certificate_passes(gap_est: GapEstimate, epsilon: float, k: int, n_pairs: int, delta: float) -> bool:
    return gap_est.g_max <= certificate_threshold(epsilon, k, n_pairs, delta)


def gap_concentration_radius(gamma: float, n_pairs: int, delta: float, M: int, varsigma: float) -> float:
    """Deviation max_s |g-hat(s) - g(s)| exceeds with probability at most delta."""
    return 2.0 / (1.0 - gamma) * math.sqrt(2.0 * math.log(2.0 * n_pairs / delta)) / math.sqrt(M) + 2.0 * varsigma


def certified_gap_bound(epsilon: float, gamma: float, k: int, n_states: int, delta: float) -> float:
    """Optimality gap guaranteed for a policy that passed the certificate."""
    return 6.0 * epsilon / (1.0 - gamma) * math.log2(8.0 * max(k, 1) * n_states / delta) ** 2


def gap_replicates(gamma: float, epsilon: float, scale: Optional[DeskScale] = None) -> int:
    """M = ceil(8 / ((1 - gamma)^2 epsilon^2)), optionally desk-scaled and capped."""
    M = math.ceil(8.0 / ((1.0 - gamma) ** 2 * epsilon ** 2))
    if scale is not None:
        M = math.ceil(M * scale.gap_factor)
        if scale.gap_replicates is not None:
            M = min(M, scale.gap_replicates)
    return max(M, 1)
