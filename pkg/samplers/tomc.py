"""Truncated on-policy Monte-Carlo (TOMC) estimation with data-driven window lengths."""
import logging
import math
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.signal import lfilter

from errors import BudgetExceeded, InvalidInputError
from linear_fa.exploration import perturb_state_policy
from models import HittingRecord, Policy
from samplers.base import Transition, TrajectorySampler

logger = logging.getLogger(__name__)


class Window(NamedTuple):
    """Trajectory slice z_0..z_{m-1} with costs."""
    states: np.ndarray
    actions: np.ndarray
    costs: np.ndarray

    @classmethod
    def from_transitions(cls, transitions: Sequence[Transition]) -> "Window":
        return cls(
            states=np.fromiter((tr.s for tr in transitions), dtype=np.int64, count=len(transitions)),
            actions=np.fromiter((tr.a for tr in transitions), dtype=np.int64, count=len(transitions)),
            costs=np.fromiter((tr.cost for tr in transitions), dtype=float, count=len(transitions)),
        )

    def __len__(self) -> int:
        return int(self.states.size)


class WindowCollection(NamedTuple):
    q: np.ndarray
    m_used: int
    record: HittingRecord
    window: Window
    samples: int


class TwoPhaseCollection(NamedTuple):
    q: np.ndarray
    m_used: int
    phase1_samples: int
    phase2_samples: int
    n_rare: int


def nonrare_mask(pi: Policy, underline_pi: float) -> np.ndarray:
    return pi.probs >= underline_pi


def nonrare_set(pi: Policy, underline_pi: float) -> frozenset[tuple[int, int]]:
    """{(s,a) : pi(a|s) >= underline_pi}."""
    if underline_pi <= 0.0:
        raise InvalidInputError(f"underline_pi={underline_pi} must be positive")
    states, actions = np.nonzero(nonrare_mask(pi, underline_pi))
    return frozenset(zip(states.tolist(), actions.tolist()))


def hitting_record(window: Window, n_states: int, n_actions: int, m: Optional[int] = None) -> HittingRecord:
    """First hitting time of every pair within the first m entries of the window."""
    m = len(window) if m is None else m
    tau = np.full(n_states * n_actions, m, dtype=np.int64)
    if m > 0:
        z = window.states[:m] * n_actions + window.actions[:m]
        seen, first = np.unique(z, return_index=True)
        tau[seen] = first
    return HittingRecord(window_length=m, tau=tau, hit=tau < m)


def discounted_returns(costs: np.ndarray, gamma: float) -> np.ndarray:
    """G_t = sum_{j >= t} gamma^{j-t} c_j over the window."""
    if costs.size == 0:
        return costs.astype(float)
    return lfilter([1.0], [1.0, -gamma], costs[::-1])[::-1]


def tomc_estimate(window: Window, pi: Policy, underline_pi: float, gamma: float) -> np.ndarray:
    """TOMC Q estimate: (1-gamma)^-1 on rare pairs, truncated discounted return from the first hit otherwise."""
    S, A = pi.probs.shape
    record = hitting_record(window, S, A)
    returns = discounted_returns(window.costs, gamma)
    safe_tau = np.minimum(record.tau, max(len(window) - 1, 0))
    hit_value = returns[safe_tau] if len(window) else np.zeros(S * A)
    q = np.where(record.hit, hit_value, 0.0)
    q = np.where(nonrare_mask(pi, underline_pi).reshape(-1), q, 1.0 / (1.0 - gamma))
    return q.reshape(S, A)


def discounted_hitting(m: int, tau: int, gamma: float) -> float:
    """gamma^{m - tau}."""
    if not 0 <= tau <= m:
        raise InvalidInputError(f"need 0 <= tau <= m, got tau={tau}, m={m}")
    return gamma ** (m - tau)


def mixing_extra(gamma: float, varsigma: float) -> int:
    """Steps past the last first-hit needed for gamma^{m - tau} <= varsigma (1 - gamma)."""
    threshold = varsigma * (1.0 - gamma)
    if threshold >= 1.0:
        return 0
    if gamma == 0.0:
        return 1
    return math.ceil(math.log(1.0 / threshold) / math.log(1.0 / gamma))


def hitting_tail_beta(lambda_z: float, rho: float, C: float, gamma: float, delta: float) -> tuple[float, int]:
    """Tail rate beta^pi_delta(z) of the discounted hitting time, and t_mix(z) = ceil(log_rho(lambda(z) / (2C))).

    Pr{gamma^{m - tau_m(z)} > 3 (1 - beta)^m} <= delta for a pair with stationary mass lambda(z).
    """
    if not (0.0 < lambda_z <= 1.0 and 0.0 < rho < 1.0 and C > 0.0 and 0.0 < delta < 1.0):
        raise InvalidInputError("need lambda in (0, 1], rho in (0, 1), C > 0 and delta in (0, 1)")
    t_mix = max(1, math.ceil(math.log(lambda_z / (2.0 * C)) / math.log(rho)))
    b = lambda_z / (2.0 * t_mix * math.log(4.0 * t_mix / (lambda_z * delta)))
    return min(1.0 - math.sqrt(gamma), b), t_mix


def collect_window(
    stream: TrajectorySampler,
    pi: Policy,
    varsigma: float,
    underline_pi: float,
    max_window: Optional[int] = None,
) -> WindowCollection:
    """Stream on-policy until every non-rare pair is hit, then extend to the dynamic mixing time."""
    if varsigma <= 0.0:
        raise InvalidInputError(f"varsigma={varsigma} must be positive")
    gamma = stream.gamma
    S, A = pi.probs.shape
    start = stream.counter
    pending = set((np.flatnonzero(nonrare_mask(pi, underline_pi).reshape(-1))).tolist())
    extra = mixing_extra(gamma, varsigma)
    step = stream.step
    transitions: list[Transition] = []

    if extra == 0 or not pending:
        m = 1
    else:
        last_hit = 0
        while pending:
            if max_window is not None and len(transitions) >= max_window:
                raise BudgetExceeded(max_window, len(transitions), "dynamic mixing collection")
            tr = step(pi)
            z = tr.s * A + tr.a
            if z in pending:
                pending.discard(z)
                last_hit = len(transitions)
            transitions.append(tr)
        m = last_hit + extra
        if max_window is not None and m > max_window:
            raise BudgetExceeded(max_window, m, "dynamic mixing collection")

    while len(transitions) < m:
        transitions.append(step(pi))

    window = Window.from_transitions(transitions)
    q = tomc_estimate(window, pi, underline_pi, gamma)
    record = hitting_record(window, S, A)
    return WindowCollection(q=q, m_used=m, record=record, window=window, samples=stream.counter - start)


def dynamic_mixing_collect(
    stream: TrajectorySampler,
    pi: Policy,
    varsigma: float,
    underline_pi: float,
    max_window: Optional[int] = None,
) -> tuple[np.ndarray, int]:
    """TOMC estimate over the dynamic mixing window, and the window length."""
    collection = collect_window(stream, pi, varsigma, underline_pi, max_window)
    return collection.q, collection.m_used


def _visit_pair(stream: TrajectorySampler, explore: Policy, s: int, a: int, max_steps: Optional[int]) -> Transition:
    """Roll the exploration policy until state s is current and the drawn action is a; execute a."""
    steps = 0
    while True:
        if max_steps is not None and steps >= max_steps:
            raise BudgetExceeded(max_steps, steps, f"visiting pair ({s}, {a})")
        if stream.state == s:
            drawn = stream.draw_action(explore)
            if drawn == a:
                return stream.act(a)
            stream.act(drawn)
        else:
            stream.step(explore)
        steps += 1


def two_phase_collect(
    stream: TrajectorySampler,
    pi: Policy,
    varsigma: float,
    eps_state: float,
    underline_pi: Optional[float] = None,
    max_window: Optional[int] = None,
) -> TwoPhaseCollection:
    """Phase I on-policy TOMC; Phase II revisits each rare pair through the state-exploration policy."""
    if not 0.0 < eps_state <= 1.0:
        raise InvalidInputError(f"eps_state={eps_state} must lie in (0, 1]")
    underline_pi = eps_state if underline_pi is None else underline_pi
    gamma = stream.gamma
    S, A = pi.probs.shape

    phase1 = collect_window(stream, pi, varsigma, underline_pi, max_window)
    q = phase1.q.copy()
    rare = np.argwhere(~nonrare_mask(pi, underline_pi))
    horizon = max(phase1.m_used, mixing_extra(gamma, varsigma))
    explore = perturb_state_policy(pi, eps_state, S)
    discounts = gamma ** np.arange(horizon)

    phase2_start = stream.counter
    for s, a in rare.tolist():
        first = _visit_pair(stream, explore, s, a, max_window)
        costs = [first.cost]
        for _ in range(horizon - 1):
            costs.append(stream.step(pi).cost)
        q[s, a] = float(discounts @ np.asarray(costs))
    phase2 = stream.counter - phase2_start

    logger.debug(
        f"Two-phase estimate: m={phase1.m_used}, phase I {phase1.samples} samples, "
        f"{len(rare)} rare pairs, phase II {phase2} samples"
    )
    return TwoPhaseCollection(
        q=q, m_used=phase1.m_used, phase1_samples=phase1.samples, phase2_samples=phase2, n_rare=len(rare)
    )


def two_phase_estimate(
    stream: TrajectorySampler,
    pi: Policy,
    varsigma: float,
    eps_state: float,
    underline_pi: Optional[float] = None,
    max_window: Optional[int] = None,
) -> np.ndarray:
    """Q^pi estimate whose every entry has bias at most varsigma."""
    return two_phase_collect(stream, pi, varsigma, eps_state, underline_pi, max_window).q
