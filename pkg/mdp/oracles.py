"""Exact linear-algebra oracles for finite discounted MDPs.

Every function here reads the true model. Algorithms never call these; they
are used for diagnostics, tests and the verification battery.
"""
import logging
import math

import numpy as np
from scipy import linalg

from errors import InvalidInputError, SingularSystem
from models import Policy, Regularizer, TabularMdp

logger = logging.getLogger(__name__)

_RESIDUAL_TOL = 1e-10
_GREEDY_TIE_TOL = 1e-12


def _check_shapes(mdp: TabularMdp, pi: Policy) -> None:
    if pi.probs.shape != mdp.cost.shape:
        raise InvalidInputError(
            f"policy shape {pi.probs.shape} does not match MDP {mdp.cost.shape}"
        )


def policy_kernel(mdp: TabularMdp, pi: Policy) -> np.ndarray:
    """State kernel P_pi(s, s') = sum_a pi(a|s) P(s'|s,a)."""
    _check_shapes(mdp, pi)
    return np.einsum("sa,sat->st", pi.probs, mdp.transition)


def pair_kernel(mdp: TabularMdp, pi: Policy) -> np.ndarray:
    """Pair kernel P^pi((s,a),(s',a')) = P(s'|s,a) pi(a'|s'), indexed z = s*|A| + a."""
    _check_shapes(mdp, pi)
    n = mdp.n_pairs
    return np.einsum("sat,tb->satb", mdp.transition, pi.probs).reshape(n, n)


def solve_linear(matrix: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    """Dense solve with a residual check; SingularSystem on failure."""
    try:
        x = linalg.solve(matrix, rhs)
    except (linalg.LinAlgError, ValueError) as e:
        raise SingularSystem(f"{what}: {e}") from e
    if not np.all(np.isfinite(x)):
        raise SingularSystem(f"{what}: non-finite solution")
    residual = float(np.max(np.abs(matrix @ x - rhs))) if x.size else 0.0
    if residual > _RESIDUAL_TOL * max(1.0, float(np.max(np.abs(rhs)))):
        raise SingularSystem(f"{what}: residual {residual:.3e} above tolerance")
    return x


def exact_value(mdp: TabularMdp, pi: Policy, h: Regularizer | None = None) -> np.ndarray:
    """V^pi solving (I - gamma P_pi) V = c_pi + h_pi."""
    h = h or Regularizer.none()
    P_pi = policy_kernel(mdp, pi)
    rhs = np.einsum("sa,sa->s", pi.probs, mdp.cost) + h.evaluate(pi.probs)
    lhs = np.eye(mdp.n_states) - mdp.gamma * P_pi
    return solve_linear(lhs, rhs, "policy evaluation")


def exact_q(mdp: TabularMdp, pi: Policy, h: Regularizer | None = None) -> np.ndarray:
    """Q^pi(s,a) = c(s,a) + h(pi(.|s)) + gamma <P(.|s,a), V^pi>."""
    h = h or Regularizer.none()
    V = exact_value(mdp, pi, h)
    h_pi = np.asarray(h.evaluate(pi.probs))
    return mdp.cost + h_pi[:, None] + mdp.gamma * np.einsum("sat,t->sa", mdp.transition, V)


def greedy_policy(q: np.ndarray) -> Policy:
    """Deterministic argmin policy; ties within 1e-12 go to the lowest action index."""
    near_min = q <= q.min(axis=1, keepdims=True) + _GREEDY_TIE_TOL
    actions = np.argmax(near_min, axis=1)
    return Policy.deterministic(actions, q.shape[1])


def solve_optimal(mdp: TabularMdp, h: Regularizer | None = None, tol: float = 1e-10) -> tuple[Policy, np.ndarray]:
    """Value iteration to sup-norm tolerance, then the greedy policy and its exact value."""
    if h is not None and not h.is_none:
        raise InvalidInputError("solve_optimal supports the unregularized problem only")

    gamma = mdp.gamma
    V = np.zeros(mdp.n_states)
    if gamma == 0.0:
        max_iter = 1
    else:
        max_iter = int(math.ceil(math.log(tol * (1.0 - gamma) / 2.0) / math.log(gamma))) + 10

    for it in range(max(max_iter, 1)):
        Q = mdp.cost + gamma * np.einsum("sat,t->sa", mdp.transition, V)
        V_new = Q.min(axis=1)
        diff = float(np.max(np.abs(V_new - V)))
        V = V_new
        if diff <= tol * (1.0 - gamma):
            break
    logger.debug(f"Value iteration stopped after {it + 1} sweeps (last change {diff:.2e})")

    Q = mdp.cost + gamma * np.einsum("sat,t->sa", mdp.transition, V)
    pi_star = greedy_policy(Q)
    return pi_star, exact_value(mdp, pi_star)


def policy_iteration(mdp: TabularMdp, max_iter: int = 10_000) -> tuple[Policy, np.ndarray]:
    """Howard policy iteration with exact evaluation."""
    pi = greedy_policy(mdp.cost)
    for _ in range(max_iter):
        q = exact_q(mdp, pi)
        current = np.argmax(pi.probs, axis=1)
        best = q.min(axis=1)
        keep = q[np.arange(mdp.n_states), current] <= best + _GREEDY_TIE_TOL
        if np.all(keep):
            break
        actions = np.where(keep, current, np.argmin(q, axis=1))
        pi = Policy.deterministic(actions, mdp.n_actions)
    pi = greedy_policy(exact_q(mdp, pi))
    return pi, exact_value(mdp, pi)


def advantage(mdp: TabularMdp, pi: Policy, h: Regularizer | None, s: int, p) -> float:
    """psi^pi(s, p) = <Q^pi(s,.), p> - V^pi(s) + h(p) - h(pi(.|s))."""
    h = h or Regularizer.none()
    p = np.asarray(p, dtype=float)
    Q = exact_q(mdp, pi, h)
    V = np.einsum("sa,sa->s", Q, pi.probs)
    return float(Q[s] @ p - V[s] + h.evaluate(p) - h.evaluate(pi.probs[s]))


def visitation_matrix(mdp: TabularMdp, pi: Policy) -> np.ndarray:
    """Row q holds kappa^pi_q = (1 - gamma) e_q^T (I - gamma P_pi)^-1."""
    P_pi = policy_kernel(mdp, pi)
    n = mdp.n_states
    inverse = solve_linear(np.eye(n) - mdp.gamma * P_pi, np.eye(n), "visitation")
    return (1.0 - mdp.gamma) * inverse


def discounted_visitation(mdp: TabularMdp, pi: Policy, q: int) -> np.ndarray:
    """Discounted state visitation distribution started from state q."""
    if not 0 <= q < mdp.n_states:
        raise InvalidInputError(f"state {q} out of range")
    P_pi = policy_kernel(mdp, pi)
    e_q = np.zeros(mdp.n_states)
    e_q[q] = 1.0
    row = solve_linear((np.eye(mdp.n_states) - mdp.gamma * P_pi).T, e_q, "visitation")
    return (1.0 - mdp.gamma) * row


def mixed_visitation(mdp: TabularMdp, pi: Policy, s_or: int, f: float) -> np.ndarray:
    """(1 - f) kappa_{s_or} + f * mean_q kappa_q."""
    if not 0.0 <= f <= 1.0:
        raise InvalidInputError(f"frequency f={f} must lie in [0, 1]")
    kappa = visitation_matrix(mdp, pi)
    if not 0 <= s_or < mdp.n_states:
        raise InvalidInputError(f"origin state {s_or} out of range")
    return (1.0 - f) * kappa[s_or] + f * kappa.mean(axis=0)


def optimality_gap(mdp: TabularMdp, pi: Policy, v_star: np.ndarray) -> float:
    """max_s V^pi(s) - V*(s)."""
    return float(np.max(exact_value(mdp, pi) - v_star))


def truncated_rollout_q(mdp: TabularMdp, pi: Policy, horizon: int) -> np.ndarray:
    """sum_{t < horizon} gamma^t E[c_t | z_0 = z] by propagating pair distributions."""
    n = mdp.n_pairs
    P_pair = pair_kernel(mdp, pi)
    c = mdp.cost.reshape(n)
    q = np.zeros(n)
    expected = c.copy()
    discount = 1.0
    for _ in range(horizon):
        q += discount * expected
        expected = P_pair @ expected
        discount *= mdp.gamma
    return q.reshape(mdp.cost.shape)
