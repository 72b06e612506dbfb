"""The deterministic operator F, its projected fixed point, and the CTD error bounds."""
import logging
import math

import numpy as np
from scipy import linalg

from errors import InvalidInputError
from linear_fa.exploration import perturb_action_policy
from mdp.oracles import mixed_visitation, pair_kernel, solve_linear
from models import FeatureMap, Policy, TabularMdp, WeightModel, mixing_floor

logger = logging.getLogger(__name__)

MIN_CURVATURE = 1e-14


def _check_features(mdp: TabularMdp, fmap: FeatureMap) -> None:
    if fmap.n_pairs != mdp.n_pairs:
        raise InvalidInputError(f"feature map has {fmap.n_pairs} rows, MDP has {mdp.n_pairs} pairs")


def build_weights(
    mdp: TabularMdp,
    pi: Policy,
    fmap: FeatureMap,
    s_or: int,
    f: float,
    eps_action: float,
) -> WeightModel:
    """w(s, a) = mixed visitation of s times the action-exploration policy, with mu = lambda_min(Phi^T W Phi)."""
    _check_features(mdp, fmap)
    kappa = mixed_visitation(mdp, pi, s_or, f)
    explore = perturb_action_policy(pi, eps_action)
    w = (kappa[:, None] * explore.probs).reshape(-1)
    w = w / w.sum()
    gram = fmap.phi.T @ (w[:, None] * fmap.phi)
    mu = float(linalg.eigvalsh(gram)[0])
    if mu <= MIN_CURVATURE:
        raise InvalidInputError(f"lambda_min(Phi^T W Phi) = {mu:.3e}; weights or features are degenerate")
    return WeightModel(w=w, s_or=s_or, f=f, eps_action=eps_action, mu=mu)


def _bellman_matrix(mdp: TabularMdp, pi: Policy, fmap: FeatureMap, wm: WeightModel) -> np.ndarray:
    """Phi^T W (I - gamma P^pi) Phi."""
    phi = fmap.phi
    return phi.T @ (wm.w[:, None] * (phi - mdp.gamma * pair_kernel(mdp, pi) @ phi))


def exact_F(mdp: TabularMdp, pi: Policy, fmap: FeatureMap, wm: WeightModel, theta) -> np.ndarray:
    """F(theta) = Phi^T W (Phi theta - c - gamma P^pi Phi theta)."""
    _check_features(mdp, fmap)
    theta = np.asarray(theta, dtype=float)
    c = mdp.cost.reshape(-1)
    q = fmap.phi @ theta
    td = q - c - mdp.gamma * (pair_kernel(mdp, pi) @ q)
    return fmap.phi.T @ (wm.w * td)


def solve_projected_bellman(
    mdp: TabularMdp, pi: Policy, fmap: FeatureMap, wm: WeightModel
) -> tuple[np.ndarray, np.ndarray]:
    """Unique root theta_bar of F and Q_bar = Phi theta_bar, reshaped to (|S|, |A|)."""
    _check_features(mdp, fmap)
    lhs = _bellman_matrix(mdp, pi, fmap, wm)
    rhs = fmap.phi.T @ (wm.w * mdp.cost.reshape(-1))
    theta_bar = solve_linear(lhs, rhs, "projected Bellman equation")
    return theta_bar, (fmap.phi @ theta_bar).reshape(mdp.cost.shape)


def weighted_norm(x, w) -> float:
    """||x||_W = sqrt(sum w x^2)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    return float(np.sqrt(np.asarray(w) @ (x * x)))


def epoch_length(gamma: float, iota: float, mu: float) -> int:
    """T = ceil(8 / ((1 - gamma) iota mu))."""
    if iota <= 0.0 or mu <= 0.0:
        raise InvalidInputError("iota and mu must be positive")
    return math.ceil(8.0 / ((1.0 - gamma) * iota * mu))


def prop_floor_m(gamma: float, fmap: FeatureMap, mu: float, n_states: int) -> int:
    """Smallest mixing cap m for which the CTD convergence guarantees hold."""
    return mixing_floor(gamma, fmap.omega, mu, n_states)


def stepsize_cap(gamma: float, omega: float) -> float:
    return (1.0 - gamma) / (512.0 * omega ** 2)


def f_hat_bias_bound(gamma: float, n_pairs: int, omega: float, m: int) -> float:
    """Bias of F-hat at the fixed point: 10 |Z|^{1/2} Omega gamma^m / (1 - gamma)."""
    return 10.0 * math.sqrt(n_pairs) * omega * gamma ** m / (1.0 - gamma)


def f_hat_second_moment_bound(gamma: float, omega: float) -> float:
    """E||F-hat(theta_bar) - F(theta_bar)||^2 <= 418 Omega^2 / (1 - gamma)^2."""
    return 418.0 * omega ** 2 / (1.0 - gamma) ** 2


def c2_constant(iota: float, m: int, gamma: float, n_states: int, omega: float, mu: float) -> float:
    """C_2(iota, m) = 6 iota |S|^{1/2} Omega^2 gamma^m / mu * (1 + 2 iota |S|^{1/2} Omega^2 gamma^m)."""
    x = iota * math.sqrt(n_states) * omega ** 2 * gamma ** m
    return 6.0 * x / mu * (1.0 + 2.0 * x)


def ctd_bias_bound(n_half: int, iota: float, m: int, gamma: float, n_states: int, omega: float, mu: float) -> float:
    """Bound on ||E Q-hat_{N,2N} - Q_bar||_W^2."""
    T = epoch_length(gamma, iota, mu)
    c2 = c2_constant(iota, m, gamma, n_states, omega, mu)
    scale = omega ** 2 / ((1.0 - gamma) ** 2 * mu)
    return 2.0 ** -(n_half // T) * 16.0 * scale + 786.0 * T ** 2 * c2 * scale


def ctd_variance_bound(n_half: int, iota: float, m: int, gamma: float, n_states: int, omega: float, mu: float) -> float:
    """sigma-hat(N, iota, m)^2, the bound on E||Q-hat_{N,2N} - Q_bar||_W^2; inf when N < T."""
    T = epoch_length(gamma, iota, mu)
    epochs = n_half // T
    if epochs == 0:
        return math.inf
    c2 = c2_constant(iota, m, gamma, n_states, omega, mu)
    first = 196.0 * (11.0 + 2.0 * math.log2(T * omega ** 2 / mu)) / (epochs * (1.0 - gamma) ** 2)
    second = 556.0 * math.sqrt(omega ** 2 * T ** 2 * c2) / math.sqrt((1.0 - gamma) ** 4 * mu)
    return first + second


def robust_norm_bound(variance_bound: float, w_min: float, approx_error_inf: float) -> float:
    """Squared sup-norm level the min-norm replicate exceeds with probability at most 2^-j."""
    return 4.0 * (variance_bound / w_min + approx_error_inf ** 2)
