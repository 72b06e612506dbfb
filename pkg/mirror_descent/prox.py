"""Per-state proximal step of stochastic policy mirror descent."""
import logging
import math
from typing import Callable

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp, softmax

from config import PROB_CLIP
from errors import BisectionFailed, InvalidInputError
from mirror_descent.bregman import bregman, check_simplex
from models import DistanceGenerator, Regularizer

logger = logging.getLogger(__name__)

MAX_DOUBLINGS = 200


def best_response(q_row, h: Regularizer | None = None) -> np.ndarray:
    """argmin over the simplex of <q, p> + h(p).

    A vertex (lowest index among ties) without regularization, the softmin
    exp(-q / tau) under entropy.
    """
    q_row = np.asarray(q_row, dtype=float)
    h = h or Regularizer.none()
    if h.is_none:
        p = np.zeros_like(q_row)
        p[int(np.argmin(q_row))] = 1.0
        return p
    return softmax(-q_row / h.tau)


def prox_objective(pi_s, q_row, h: Regularizer, eta: float, dgf: DistanceGenerator, candidate) -> float:
    """<q, v> + h(v) + D(pi_s, v) / eta."""
    candidate = np.asarray(candidate, dtype=float)
    return float(np.asarray(q_row) @ candidate + h.evaluate(candidate) + bregman(dgf, pi_s, candidate) / eta)


def _expand_bracket(g: Callable[[float], float], lo: float, hi: float, what: str) -> tuple[float, float]:
    """Grow [lo, hi] geometrically until the decreasing function g changes sign."""
    for _ in range(MAX_DOUBLINGS):
        if g(lo) >= 0.0:
            break
        lo = lo - (hi - lo)
    else:
        raise BisectionFailed(f"{what}: no lower bracket after {MAX_DOUBLINGS} doublings")
    for _ in range(MAX_DOUBLINGS):
        if g(hi) <= 0.0:
            break
        hi = hi + (hi - lo)
    else:
        raise BisectionFailed(f"{what}: no upper bracket after {MAX_DOUBLINGS} doublings")
    return lo, hi


def _tsallis_plain(pi_s: np.ndarray, q: np.ndarray, eta: float, p: float, tol: float) -> np.ndarray:
    """Tsallis prox without regularization: one scalar multiplier, closed-form bracket."""
    base = np.power(pi_s, p - 1.0)
    shifted = eta * (q - q.min())
    expo = 1.0 / (p - 1.0)

    def coords(nu: float) -> np.ndarray:
        return np.power(base + (1.0 - p) * (shifted + nu), expo)

    def residual(nu: float) -> float:
        return float(coords(nu).sum()) - 1.0

    lo = float(np.max((1.0 - base) / (1.0 - p) - shifted))
    if not math.isfinite(lo):
        raise BisectionFailed(f"multiplier bracket overflowed (lower end {lo})")
    if residual(lo) <= 0.0:
        nu = lo
    elif residual(0.0) >= 0.0:
        nu = 0.0
    else:
        nu = brentq(residual, lo, 0.0, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500)
    return coords(nu)


def _tsallis_entropy(pi_s: np.ndarray, q: np.ndarray, eta: float, tau: float, p: float, tol: float) -> np.ndarray:
    """Tsallis prox with tau * entropy: per-coordinate root in log-space inside a multiplier search."""
    scale = 1.0 / (eta * (1.0 - p))
    target = -(q - q.min()) - tau - np.power(pi_s, p - 1.0) * scale

    def phi(x: float) -> float:
        with np.errstate(over="ignore"):
            return tau * x - float(np.exp((p - 1.0) * x)) * scale

    def log_coord(y: float) -> float:
        lo, hi = _expand_bracket(lambda x: y - phi(x), -1.0, 1.0, "coordinate solve")
        return brentq(lambda x: y - phi(x), lo, hi, xtol=tol, maxiter=500)

    def coords(nu: float) -> np.ndarray:
        return np.exp([log_coord(y - nu) for y in target])

    def residual(nu: float) -> float:
        return float(coords(nu).sum()) - 1.0

    lo, hi = _expand_bracket(residual, -1.0, 1.0, "multiplier search")
    nu = brentq(residual, lo, hi, xtol=tol, maxiter=500)
    return coords(nu)


def spmd_step(
    pi_s,
    q_row,
    h: Regularizer | None,
    eta: float,
    dgf: DistanceGenerator,
    tol: float = 1e-12,
) -> np.ndarray:
    """
    argmin over the simplex of <q_row, v> + h(v) + D(pi_s, v) / eta.

    Args:
        pi_s: Current action distribution at one state
        q_row: Estimated Q values at that state
        h: Regularizer (None means no regularization)
        eta: Stepsize
        dgf: Distance-generating function
        tol: Tolerance of the multiplier search

    Returns:
        The updated action distribution
    """
    if eta <= 0.0:
        raise InvalidInputError(f"stepsize eta={eta} must be positive")
    h = h or Regularizer.none()
    pi_s = check_simplex(pi_s, "pi_s")
    q = np.asarray(q_row, dtype=float)
    if q.shape != pi_s.shape:
        raise InvalidInputError(f"q_row shape {q.shape} does not match policy row {pi_s.shape}")
    if not np.all(np.isfinite(q)):
        raise BisectionFailed("q_row is not finite")

    if h.is_none and np.ptp(q) == 0.0:
        return pi_s.copy()

    interior = np.clip(pi_s, PROB_CLIP, None)
    interior = interior / interior.sum()

    if dgf.kind == "kl":
        logits = np.log(interior) - eta * q
        if not h.is_none:
            logits = logits / (1.0 + eta * h.tau)
        upd = np.exp(logits - logsumexp(logits))
    elif h.is_none:
        upd = _tsallis_plain(interior, q, eta, dgf.p, tol)
    else:
        upd = _tsallis_entropy(interior, q, eta, h.tau, dgf.p, tol)

    if not np.all(np.isfinite(upd)) or upd.sum() <= 0.0:
        raise BisectionFailed("prox update is not a finite distribution")
    upd = np.clip(upd, PROB_CLIP, None)
    return upd / upd.sum()
