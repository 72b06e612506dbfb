"""Exploration mixtures of a policy with the uniform action distribution."""

from errors import InvalidInputError
from models import Policy


def _check_strength(eps: float) -> None:
    if not 0.0 <= eps <= 1.0:
        raise InvalidInputError(f"exploration strength {eps} must lie in [0, 1]")


def perturb_action_policy(pi: Policy, eps: float) -> Policy:
    """(1 - eps) pi + eps / |A|."""
    _check_strength(eps)
    return Policy(probs=(1.0 - eps) * pi.probs + eps / pi.n_actions)


def perturb_state_policy(pi: Policy, eps: float, n_states: int) -> Policy:
    """(1 - eps) pi + eps / |S|, rows renormalized to sum to 1."""
    _check_strength(eps)
    mixed = (1.0 - eps) * pi.probs + eps / n_states
    return Policy(probs=mixed / mixed.sum(axis=1, keepdims=True))


def uniform_mixture_floor(eps: float, n_states: int, n_actions: int) -> float:
    """Smallest entry any row of perturb_state_policy can carry."""
    return (eps / n_states) / (1.0 - eps + eps * n_actions / n_states)
