"""Distance-generating functions and their Bregman divergences on the simplex."""
import math

import numpy as np
from scipy.special import rel_entr, xlogy

from config import PROB_CLIP, SIMPLEX_INPUT_TOL
from errors import InvalidInputError
from models import DistanceGenerator


def check_simplex(x, name: str = "distribution") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise InvalidInputError(f"{name} must be a nonempty vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)) or np.any(x < -SIMPLEX_INPUT_TOL):
        raise InvalidInputError(f"{name} must be finite and nonnegative")
    if abs(float(x.sum()) - 1.0) > SIMPLEX_INPUT_TOL:
        raise InvalidInputError(f"{name} sums to {x.sum()!r}, expected 1")
    return np.clip(x, 0.0, None)


def omega(dgf: DistanceGenerator, x: np.ndarray) -> float:
    """Negative entropy sum x log x, or negative Tsallis entropy -sum x^p / ((1-p) p)."""
    if dgf.kind == "kl":
        return float(xlogy(x, x).sum())
    p = dgf.p
    return float(-np.power(x, p).sum() / ((1.0 - p) * p))


def omega_grad(dgf: DistanceGenerator, x: np.ndarray) -> np.ndarray:
    """Gradient of omega at an interior point (clipped at PROB_CLIP)."""
    x = np.clip(x, PROB_CLIP, None)
    if dgf.kind == "kl":
        return np.log(x) + 1.0
    p = dgf.p
    return -np.power(x, p - 1.0) / (1.0 - p)


def bregman(dgf: DistanceGenerator, u, v) -> float:
    """D(u, v) = omega(v) - omega(u) - <grad omega(u), v - u>, with u the base point."""
    u = check_simplex(u, "u")
    v = check_simplex(v, "v")
    if u.shape != v.shape:
        raise InvalidInputError(f"shape mismatch {u.shape} vs {v.shape}")
    u = np.clip(u, PROB_CLIP, None)
    if dgf.kind == "kl":
        return float(rel_entr(v, u).sum())
    value = omega(dgf, v) - omega(dgf, u) - float(omega_grad(dgf, u) @ (v - u))
    return max(value, 0.0)


def initial_bregman_diameter(dgf: DistanceGenerator, n_actions: int) -> float:
    """Bound on D(uniform, pi*) for any deterministic pi*."""
    if dgf.kind == "kl":
        return math.log(n_actions)
    p = dgf.p
    return n_actions ** (1.0 - p) / ((1.0 - p) * p)
