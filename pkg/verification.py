"""Property battery behind the `verify` command.

Each check draws its instances from fixed seeds and compares an identity or
inequality against exact oracles. A check never raises; failures and
unexpected errors are both reported as a failed CheckResult.
"""
import logging
from typing import Callable

import numpy as np
from pydantic import BaseModel, ConfigDict

from drivers.certificate import exact_gap
from linear_fa.features import identity_features, random_gaussian_features
from linear_fa.operator import build_weights, exact_F, solve_projected_bellman, weighted_norm
from mdp.generators import anchored_policy, gen_garnet, random_policy
from mdp.mixing import implicit_mixing_bounds, mixing_profile
from mdp.oracles import (
    exact_q,
    exact_value,
    mixed_visitation,
    pair_kernel,
    policy_iteration,
    solve_optimal,
    truncated_rollout_q,
    visitation_matrix,
)
from mirror_descent.bregman import bregman, initial_bregman_diameter
from mirror_descent.prox import spmd_step
from models import DistanceGenerator, Regularizer
from samplers.stream import SampleStream
from samplers.tomc import collect_window

logger = logging.getLogger(__name__)


class CheckResult(BaseModel):
    """Outcome of one property check."""
    model_config = ConfigDict(frozen=True)

    name: str
    passed: bool
    cases: int
    worst: float  # Largest violation margin observed; <= 0 means every case held
    detail: str = ""


def _instance(i: int, seed: int, gamma: float = 0.8, dense: bool = False):
    n_states = 3 + i % 4
    n_actions = 2 + i % 3
    branching = n_states if dense else min(3, n_states)
    mdp = gen_garnet(n_states, n_actions, branching, seed + i, gamma=gamma)
    return mdp, random_policy(n_states, n_actions, seed + 10_000 + i)


def _result(name: str, cases: int, worst: float, detail: str = "") -> CheckResult:
    return CheckResult(name=name, passed=bool(worst <= 0.0), cases=cases, worst=float(worst), detail=detail)


def check_oracle_equivalence(seed: int, quick: bool = False) -> CheckResult:
    """Linear-solve Q vs the truncated unroll, and value iteration vs policy iteration."""
    n = 5 if quick else 20
    worst = -np.inf
    for i in range(n):
        mdp, pi = _instance(i, seed)
        tol = mdp.gamma ** 200 / (1.0 - mdp.gamma) + 1e-10
        worst = max(worst, float(np.abs(exact_q(mdp, pi) - truncated_rollout_q(mdp, pi, 200)).max()) - tol)
        pi_vi, v_vi = solve_optimal(mdp)
        pi_pi, v_pi = policy_iteration(mdp)
        worst = max(worst, float(np.abs(v_vi - v_pi).max()) - 1e-8)
        if not np.array_equal(pi_vi.probs, pi_pi.probs):
            worst = max(worst, 1.0)
    return _result("oracle_equivalence", n, worst)


def check_performance_difference(seed: int, quick: bool = False) -> CheckResult:
    """V^pi'(s) - V^pi(s) = (1-gamma)^-1 sum_q psi^pi(q, pi'(.|q)) kappa^pi'_s(q)."""
    n = 10 if quick else 50
    worst = -np.inf
    for i in range(n):
        mdp, pi = _instance(i, seed)
        other = random_policy(mdp.n_states, mdp.n_actions, seed + 20_000 + i)
        Q = exact_q(mdp, pi)
        V = exact_value(mdp, pi)
        psi = np.einsum("sa,sa->s", Q, other.probs) - V
        rhs = visitation_matrix(mdp, other) @ psi / (1.0 - mdp.gamma)
        lhs = exact_value(mdp, other) - V
        worst = max(worst, float(np.abs(lhs - rhs).max()) - 1e-8)
    return _result("performance_difference", n, worst)


def check_tsallis_strong_convexity(seed: int, quick: bool = False) -> CheckResult:
    """D(u, v) >= 1/2 ||u - v||_1^2 for the Tsallis distance at several indices."""
    rng = np.random.default_rng(seed)
    n = 1000 if quick else 10_000
    worst = -np.inf
    for p in (0.1, 0.25, 0.5):
        dgf = DistanceGenerator.tsallis(p)
        for _ in range(n):
            n_actions = int(rng.integers(2, 6))
            u, v = rng.dirichlet(np.ones(n_actions), size=2)
            u = np.clip(u, 1e-9, None)
            u /= u.sum()
            worst = max(worst, 0.5 * np.abs(u - v).sum() ** 2 - bregman(dgf, u, v) - 1e-12)
    return _result("tsallis_strong_convexity", 3 * n, worst)


def check_initial_diameter(seed: int, quick: bool = False) -> CheckResult:
    """Distance from the uniform policy to any vertex is within |A|^(1-p) / ((1-p) p)."""
    worst = -np.inf
    cases = 0
    for p in (0.1, 0.25, 0.5):
        dgf = DistanceGenerator.tsallis(p)
        for n_actions in range(2, 8):
            uniform = np.full(n_actions, 1.0 / n_actions)
            bound = initial_bregman_diameter(dgf, n_actions)
            for a in range(n_actions):
                vertex = np.zeros(n_actions)
                vertex[a] = 1.0
                worst = max(worst, bregman(dgf, uniform, vertex) - bound - 1e-12)
                cases += 1
    return _result("initial_bregman_diameter", cases, worst)


def check_gap_sandwich(seed: int, quick: bool = False) -> CheckResult:
    """g(s) <= V^pi(s) - V*(s) <= (1-gamma)^-1 max_s' g(s')."""
    n = 10 if quick else 50
    worst = -np.inf
    for i in range(n):
        mdp, pi = _instance(i, seed)
        _, v_star = solve_optimal(mdp)
        g = exact_gap(mdp, pi)
        opt = exact_value(mdp, pi) - v_star
        worst = max(worst, float((g - opt).max()) - 1e-10)
        worst = max(worst, float(opt.max() - g.max() / (1.0 - mdp.gamma)) - 1e-10)
    return _result("gap_sandwich", n, worst)


def check_visitation_floor(seed: int, quick: bool = False) -> CheckResult:
    """Mixed visitation puts at least f (1-gamma) / |S| on every state."""
    n = 10 if quick else 50
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for i in range(n):
        mdp, pi = _instance(i, seed)
        f = float(rng.uniform(0.05, 1.0))
        s_or = int(rng.integers(mdp.n_states))
        kappa = mixed_visitation(mdp, pi, s_or, f)
        floor = f * (1.0 - mdp.gamma) / mdp.n_states
        worst = max(worst, float(floor - kappa.min()) - 1e-12, abs(float(kappa.sum()) - 1.0) - 1e-10)
    return _result("visitation_floor", n, worst)


def check_time_shift(seed: int, quick: bool = False) -> CheckResult:
    """sum_z kappa_q(s) pi(a|s) P^pi(z, z') <= gamma^-1 kappa_q(s') pi(a'|s')."""
    n = 10 if quick else 50
    worst = -np.inf
    for i in range(n):
        mdp, pi = _instance(i, seed)
        kappa = visitation_matrix(mdp, pi)
        P = pair_kernel(mdp, pi)
        for q in range(mdp.n_states):
            rho = (kappa[q][:, None] * pi.probs).reshape(-1)
            worst = max(worst, float((rho @ P - rho / mdp.gamma).max()) - 1e-12)
    return _result("time_shift", n, worst)


def check_operator_structure(seed: int, quick: bool = False) -> CheckResult:
    """Strong monotonicity, Lipschitz continuity, near non-expansiveness and the fixed-point norm of F."""
    n_instances = 4 if quick else 20
    probes = 100 if quick else 1000
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for i in range(n_instances):
        mdp, pi = _instance(i, seed)
        gamma = mdp.gamma
        n_pairs = mdp.n_pairs
        if i % 2 == 0:
            fmap = identity_features(n_pairs)
        else:
            fmap = random_gaussian_features(n_pairs, max(1, n_pairs - 2), seed + i)
        kappa = mixed_visitation(mdp, pi, 0, 1.0)
        eps_action = (1.0 - gamma) * float(kappa.min()) / 4.0
        wm = build_weights(mdp, pi, fmap, 0, 1.0, eps_action)
        P = pair_kernel(mdp, pi)

        _, q_bar = solve_projected_bellman(mdp, pi, fmap, wm)
        worst = max(worst, weighted_norm(q_bar.reshape(-1), wm.w) - 4.0 / (1.0 - gamma))

        for _ in range(probes):
            theta, theta2 = rng.normal(size=(2, fmap.dim))
            dF = exact_F(mdp, pi, fmap, wm, theta) - exact_F(mdp, pi, fmap, wm, theta2)
            diff = fmap.phi @ (theta - theta2)
            norm_w = weighted_norm(diff, wm.w)
            worst = max(worst, (1.0 - gamma) / 4.0 * norm_w ** 2 - float(dF @ (theta - theta2)) - 1e-10)
            worst = max(worst, float(np.linalg.norm(dF)) - 2.0 * fmap.omega * norm_w - 1e-10)
            u = rng.normal(size=n_pairs)
            worst = max(
                worst,
                weighted_norm(P @ u, wm.w) ** 2 - gamma ** -1.5 * weighted_norm(u, wm.w) ** 2 - 1e-10,
            )
    return _result("operator_structure", n_instances * probes, worst)


def check_implicit_mixing(seed: int, quick: bool = False) -> CheckResult:
    """Policies keeping pi(a*|s) >= underline_pi mix within the inherited rate and floor."""
    n = 6 if quick else 30
    worst = -np.inf
    cases = 0
    for i in range(n):
        mdp, _ = _instance(i, seed, dense=True)
        pi_star, _ = solve_optimal(mdp)
        profile = mixing_profile(mdp, pi_star)
        if not profile.is_geometric or profile.C > 2.0 or profile.nu_floor <= 0.0:
            continue
        profile = profile.normalized()
        for underline_pi in (0.05, 0.2):
            bounds = implicit_mixing_bounds(profile, underline_pi)
            perturbed = anchored_policy(pi_star, underline_pi, seed + 30_000 + i)
            measured = mixing_profile(mdp, perturbed)
            worst = max(worst, measured.rho - bounds.rho_bound, bounds.nu_floor - measured.nu_floor)
            cases += 1
    return _result("implicit_mixing_bounds", cases, worst if cases else 0.0)


def check_kl_prox_closed_form(seed: int, quick: bool = False) -> CheckResult:
    """KL prox with h = none equals the multiplicative-weights update."""
    rng = np.random.default_rng(seed)
    n = 100 if quick else 1000
    worst = -np.inf
    dgf = DistanceGenerator.kl()
    for _ in range(n):
        n_actions = int(rng.integers(2, 6))
        pi_s = rng.dirichlet(np.ones(n_actions))
        pi_s = np.clip(pi_s, 1e-6, None)
        pi_s /= pi_s.sum()
        q = rng.uniform(0.0, 5.0, size=n_actions)
        eta = float(rng.uniform(0.01, 2.0))
        expected = pi_s * np.exp(-eta * (q - q.min()))
        expected /= expected.sum()
        out = spmd_step(pi_s, q, Regularizer.none(), eta, dgf)
        worst = max(worst, float(np.abs(out - expected).max()) - 1e-9)
    return _result("kl_prox_closed_form", n, worst)


def check_tomc_determinism(seed: int, quick: bool = False) -> CheckResult:
    """Identical seeds give identical windows; TOMC entries stay in [0, (1-gamma)^-1]."""
    n = 3 if quick else 10
    worst = -np.inf
    for i in range(n):
        mdp, pi = _instance(i, seed, dense=True)
        outputs = []
        for _ in range(2):
            stream = SampleStream(mdp, seed=seed + i)
            collection = collect_window(stream, pi, varsigma=0.05, underline_pi=0.05)
            worst = max(worst, float(collection.samples - stream.counter))
            outputs.append(collection.q)
        worst = max(worst, float(np.abs(outputs[0] - outputs[1]).max()))
        q_bar = 1.0 / (1.0 - mdp.gamma)
        worst = max(worst, float(outputs[0].max()) - q_bar - 1e-12, -float(outputs[0].min()))
    return _result("tomc_determinism", n, worst)


CHECKS: list[Callable[[int, bool], CheckResult]] = [
    check_oracle_equivalence,
    check_performance_difference,
    check_tsallis_strong_convexity,
    check_initial_diameter,
    check_gap_sandwich,
    check_visitation_floor,
    check_time_shift,
    check_operator_structure,
    check_implicit_mixing,
    check_kl_prox_closed_form,
    check_tomc_determinism,
]


def run_battery(seed: int = 0, quick: bool = False) -> list[CheckResult]:
    """Run every check, logging one PASS/FAIL line each."""
    results = []
    for check in CHECKS:
        try:
            result = check(seed, quick)
        except Exception as e:
            logger.error(f"Check {check.__name__} raised: {str(e)}")
            result = CheckResult(name=check.__name__, passed=False, cases=0, worst=float("inf"), detail=str(e))
        tag = "[PASS]" if result.passed else "[FAIL]"
        logger.info(f"{tag} {result.name}: {result.cases} cases, worst margin {result.worst:.3e}")
        results.append(result)
    logger.info(f"[VERIFY] {sum(r.passed for r in results)}/{len(results)} checks passed")
    return results
