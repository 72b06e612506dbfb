"""Abstract base class for single-trajectory samplers."""
from abc import ABC, abstractmethod
from typing import NamedTuple

from models import Policy


class Transition(NamedTuple):
    """One environment transition z_t = (s_t, a_t) with its cost and successor."""
    s: int
    a: int
    cost: float
    s_next: int


class TrajectorySampler(ABC):
    """
    Abstract base class for online data sources.

    A sampler exposes one never-reset trajectory. Algorithms read the
    current state, choose actions and advance the trajectory one
    transition at a time; every transition increments the sample counter.
    """

    @property
    @abstractmethod
    def state(self) -> int:
        """Current state of the trajectory."""
        pass

    @property
    @abstractmethod
    def counter(self) -> int:
        """Number of transitions taken so far."""
        pass

    @property
    @abstractmethod
    def n_states(self) -> int:
        pass

    @property
    @abstractmethod
    def n_actions(self) -> int:
        pass

    @property
    @abstractmethod
    def gamma(self) -> float:
        """Discount factor the algorithms run with."""
        pass

    @abstractmethod
    def draw_action(self, pi: Policy) -> int:
        """
        Draw an action from pi at the current state without transitioning.

        Args:
            pi: Policy to sample from

        Returns:
            Action index
        """
        pass

    @abstractmethod
    def act(self, a: int) -> Transition:
        """
        Execute action a at the current state.

        Args:
            a: Action index

        Returns:
            The transition taken
        """
        pass

    def step(self, pi: Policy) -> Transition:
        """Draw a ~ pi(.|s) and execute it."""
        return self.act(self.draw_action(pi))
