"""Seeded single-trajectory simulator over a tabular MDP."""
import csv
import logging
from bisect import bisect_right
from pathlib import Path
from typing import Iterable, Optional

from numpy.random import Generator, Philox, SeedSequence

from config import RUN_CONFIG
from errors import BudgetExceeded, InvalidInputError
from models import Policy, TabularMdp
from samplers.base import Transition, TrajectorySampler

logger = logging.getLogger(__name__)

_BUFFER_SIZE = 4096


class _UniformBuffer:
    """Pre-drawn uniforms consumed in order, refilled in fixed-size blocks."""

    def __init__(self, rng: Generator):
        self.rng = rng
        self._values: list[float] = []
        self._pos = 0

    def next(self) -> float:
        if self._pos >= len(self._values):
            self._values = self.rng.random(_BUFFER_SIZE).tolist()
            self._pos = 0
        u = self._values[self._pos]
        self._pos += 1
        return u


class SampleStream(TrajectorySampler):
    """Online data model: one trajectory, counter-based 64-bit RNG, hard sample budget.

    The seed spawns two independent substreams. The trajectory substream
    drives actions and transitions; `aux_rng` serves algorithm randomness
    that is not part of the trajectory (origin-state and horizon draws).
    """

    def __init__(
        self,
        mdp: TabularMdp,
        seed: int,
        budget: Optional[int] = None,
        initial_state: int = 0,
    ):
        if not 0 <= initial_state < mdp.n_states:
            raise InvalidInputError(f"initial state {initial_state} out of range")
        self.mdp = mdp
        self.seed = seed
        self.budget = budget if budget is not None else RUN_CONFIG.sample_budget
        trajectory_seq, aux_seq = SeedSequence(seed).spawn(2)
        self.rng = Generator(Philox(trajectory_seq))
        self.aux_rng = Generator(Philox(aux_seq))
        self._uniforms = _UniformBuffer(self.rng)
        self._state = initial_state
        self._counter = 0
        self._cost = mdp.cost.tolist()
        self._transition_cdf = mdp.transition_cdf

    @property
    def state(self) -> int:
        return self._state

    @property
    def counter(self) -> int:
        return self._counter

    @property
    def n_states(self) -> int:
        return self.mdp.n_states

    @property
    def n_actions(self) -> int:
        return self.mdp.n_actions

    @property
    def gamma(self) -> float:
        return self.mdp.gamma

    def draw_action(self, pi: Policy) -> int:
        return bisect_right(pi.cdf[self._state], self._uniforms.next())

    def act(self, a: int) -> Transition:
        if self._counter >= self.budget:
            logger.error(f"[BUDGET] Stream exhausted its budget of {self.budget} transitions")
            raise BudgetExceeded(self.budget, self._counter)
        s = self._state
        s_next = bisect_right(self._transition_cdf[s][a], self._uniforms.next())
        self._state = s_next
        self._counter += 1
        return Transition(s, a, self._cost[s][a], s_next)


def rollout(stream: TrajectorySampler, pi: Policy, n: int) -> list[Transition]:
    """n on-policy transitions."""
    return [stream.step(pi) for _ in range(n)]


def dump_trajectory(path: str | Path, window: Iterable[Transition], start: int = 0) -> None:
    """Write transitions as CSV rows (t, s, a, cost, s_next)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "s", "a", "cost", "s_next"])
        for t, tr in enumerate(window, start=start):
            writer.writerow([t, tr.s, tr.a, repr(tr.cost), tr.s_next])
    logger.info(f"[WRITE] Trajectory -> {path}")
