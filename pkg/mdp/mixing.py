"""Stationary distributions and geometric mixing envelopes of policy-induced chains."""
import logging
import math

import numpy as np
from scipy import linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from config import EDGE_TOL
from errors import InvalidInputError, NotIrreducible
from mdp.oracles import policy_kernel
from models import ImplicitMixingBounds, MixingProfile, Policy, TabularMdp

logger = logging.getLogger(__name__)

# d(t) below this is treated as converged when fitting the decay rate
_DISTANCE_FLOOR = 1e-10


def closed_classes(P: np.ndarray) -> list[np.ndarray]:
    """Closed communicating classes of a stochastic matrix."""
    graph = csr_matrix(P > EDGE_TOL)
    n_comp, labels = connected_components(graph, directed=True, connection="strong")
    closed = []
    for comp in range(n_comp):
        members = np.flatnonzero(labels == comp)
        outside = np.ones(P.shape[0], dtype=bool)
        outside[members] = False
        if not np.any(P[np.ix_(members, outside)] > EDGE_TOL):
            closed.append(members)
    return closed


def chain_stationary(P: np.ndarray) -> np.ndarray:
    """Unique stationary law of P; NotIrreducible if there are several closed classes."""
    n_closed = len(closed_classes(P))
    if n_closed != 1:
        raise NotIrreducible(n_closed)
    n = P.shape[0]
    system = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    nu, *_ = linalg.lstsq(system, rhs)
    nu = np.clip(nu, 0.0, None)
    return nu / nu.sum()


def stationary_distribution(mdp: TabularMdp, pi: Policy) -> np.ndarray:
    """nu with nu P_pi = nu, sum nu = 1."""
    return chain_stationary(policy_kernel(mdp, pi))


def tv_distances(P: np.ndarray, nu: np.ndarray, horizon: int) -> np.ndarray:
    """d(t) = max_s ||P^t(s,.) - nu||_tv for t = 0..horizon."""
    Pt = np.eye(P.shape[0])
    out = np.empty(horizon + 1)
    for t in range(horizon + 1):
        out[t] = 0.5 * np.abs(Pt - nu[None, :]).sum(axis=1).max()
        Pt = Pt @ P
    return out


def fit_envelope(d: np.ndarray) -> tuple[float, float]:
    """Tightest (C, rho) with d(t) <= C rho^t, preferring C <= 2.

    rho is the larger of the worst successive decay ratio and the smallest
    rate admissible with C = 2; C is then the smallest constant that
    covers every probed horizon.
    """
    eps = np.finfo(float).eps
    ratios = [d[t] / d[t - 1] for t in range(1, d.size) if d[t - 1] > _DISTANCE_FLOOR]
    rho_ratio = max(ratios) if ratios else 0.0
    rho_c2 = max(
        ((d[t] / 2.0) ** (1.0 / t) for t in range(1, d.size) if d[t] > _DISTANCE_FLOOR),
        default=0.0,
    )
    rho = min(1.0, max(rho_ratio, rho_c2, eps))
    covered = [d[0]] + [d[t] / rho ** t for t in range(1, d.size) if d[t] > _DISTANCE_FLOOR]
    return float(max(covered)), float(rho)


def mixing_profile(mdp: TabularMdp, pi: Policy, horizon: int = 200) -> MixingProfile:
    """Stationary law and fitted geometric envelope of P_pi over t <= horizon."""
    if horizon < 1:
        raise InvalidInputError("horizon must be at least 1")
    P = policy_kernel(mdp, pi)
    nu = chain_stationary(P)
    d = tv_distances(P, nu, horizon)
    C, rho = fit_envelope(d)
    is_geometric = rho < 1.0 - 1e-12
    logger.debug(f"Mixing fit: C={C:.4f}, rho={rho:.6f}, geometric={is_geometric}")
    return MixingProfile(stationary=nu, C=C, rho=rho, is_geometric=is_geometric, distances=d)


def b_bar(nu_floor: float, rho: float) -> int:
    """ceil(log(4/nu) / log(1/rho))."""
    return max(1, math.ceil(math.log2(4.0 / nu_floor) / math.log2(1.0 / rho)))


def implicit_mixing_bounds(profile_star: MixingProfile, underline_pi: float) -> ImplicitMixingBounds:
    """Mixing rate and stationary floor guaranteed for policies keeping pi(a*|s) >= underline_pi."""
    rho_star = profile_star.rho
    nu_star = profile_star.nu_floor
    if not 0.5 <= rho_star < 1.0:
        raise InvalidInputError(f"rho*={rho_star} must lie in [1/2, 1); normalize the profile first")
    if profile_star.C > 2.0 + 1e-12:
        raise InvalidInputError(f"envelope constant C*={profile_star.C} exceeds 2")
    if nu_star <= 0.0:
        raise InvalidInputError("stationary floor of the optimal policy must be positive")
    if not 0.0 < underline_pi <= 1.0:
        raise InvalidInputError(f"underline_pi={underline_pi} must lie in (0, 1]")

    b = b_bar(nu_star, rho_star)
    shrink = underline_pi ** b
    return ImplicitMixingBounds(
        b_bar=b,
        rho_bound=1.0 - shrink * nu_star ** 2 / (2.0 * b),
        nu_floor=shrink * nu_star / 2.0,
    )
