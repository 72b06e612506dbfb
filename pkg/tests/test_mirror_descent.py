"""Tests for Bregman divergences, the prox step and the SPMD loop."""
import math

import numpy as np
import pytest

from errors import BisectionFailed, InvalidInputError
from mdp.generators import gen_garnet
from mdp.oracles import exact_q
from mirror_descent import (
    bregman,
    check_simplex,
    initial_bregman_diameter,
    prox_objective,
    spmd_run,
    spmd_step,
    update_policy,
)
from mirror_descent.prox import best_response
from models import DistanceGenerator, EstimateResult, Policy, Regularizer, SpmdConfig


def _random_simplex(rng, n, size):
    return rng.dirichlet(np.ones(n), size=size)


class TestBregman:
    """Tests for Bregman divergences."""

    def test_zero_on_diagonal(self):
        """Test D(u, u) = 0 for both generators."""
        u = [0.2, 0.3, 0.5]
        assert bregman(DistanceGenerator.kl(), u, u) == pytest.approx(0.0, abs=1e-12)
        assert bregman(DistanceGenerator.tsallis(0.5), u, u) == pytest.approx(0.0, abs=1e-12)

    def test_tsallis_value(self):
        """Test the hand-evaluated Tsallis divergence at p = 1/2."""
        value = bregman(DistanceGenerator.tsallis(0.5), [0.25, 0.75], [0.5, 0.5])
        assert value == pytest.approx(0.22990, abs=1e-4)

    def test_kl_to_vertex(self):
        """Test KL((1, 0) || (1/2, 1/2)) = log 2."""
        value = bregman(DistanceGenerator.kl(), [0.5, 0.5], [1.0, 0.0])
        assert value == pytest.approx(math.log(2.0), abs=1e-9)

    def test_rejects_off_simplex(self):
        """Test that a sum off by more than 1e-9 is rejected."""
        with pytest.raises(InvalidInputError):
            bregman(DistanceGenerator.kl(), [0.5, 0.5 + 1e-8], [0.5, 0.5])

    def test_rejects_shape_mismatch(self):
        """Test that both arguments must have the same length."""
        with pytest.raises(InvalidInputError):
            bregman(DistanceGenerator.kl(), [0.5, 0.5], [0.2, 0.3, 0.5])

    def test_check_simplex_accepts_tiny_negatives(self):
        """Test that round-off below zero is clipped."""
        x = check_simplex([1.0 + 1e-12, -1e-12])
        assert x.min() == 0.0

    @pytest.mark.parametrize("p", [0.1, 0.25, 0.5])
    def test_tsallis_strong_convexity(self, p):
        """Test D(u, v) >= 1/2 ||u - v||_1^2 on random interior pairs."""
        rng = np.random.default_rng(0)
        dgf = DistanceGenerator.tsallis(p)
        us = _random_simplex(rng, 4, 2000)
        vs = _random_simplex(rng, 4, 2000)
        for u, v in zip(us, vs):
            assert bregman(dgf, u, v) >= 0.5 * np.abs(u - v).sum() ** 2 - 1e-12

    @pytest.mark.parametrize("n_actions", [2, 3, 5])
    def test_initial_diameter(self, n_actions):
        """Test D(uniform, vertex) <= |A|^{1-p} / ((1-p) p)."""
        dgf = DistanceGenerator.tsallis(0.5)
        uniform = np.full(n_actions, 1.0 / n_actions)
        vertex = np.eye(n_actions)[0]
        assert bregman(dgf, uniform, vertex) <= initial_bregman_diameter(dgf, n_actions)

    def test_kl_diameter_is_log(self):
        """Test the KL diameter log |A|."""
        assert initial_bregman_diameter(DistanceGenerator.kl(), 4) == pytest.approx(math.log(4.0))


class TestSpmdStep:
    """Tests for the per-state prox step."""

    def test_kl_multiplicative_weights(self):
        """Test the closed form pi(a) exp(-eta q(a)) / Z."""
        pi_s = np.array([0.2, 0.3, 0.5])
        q = np.array([1.0, 0.4, 2.0])
        expected = pi_s * np.exp(-0.7 * q)
        expected /= expected.sum()
        out = spmd_step(pi_s, q, None, 0.7, DistanceGenerator.kl())
        assert np.allclose(out, expected, atol=1e-9)

    def test_constant_q_is_fixed_point(self):
        """Test that a constant q leaves the row unchanged."""
        pi_s = np.array([0.1, 0.6, 0.3])
        out = spmd_step(pi_s, [0.4, 0.4, 0.4], None, 5.0, DistanceGenerator.tsallis(0.5))
        assert np.array_equal(out, pi_s)

    def test_tiny_stepsize_stays_put(self):
        """Test that eta -> 0 returns pi_s."""
        pi_s = np.array([0.25, 0.75])
        out = spmd_step(pi_s, [1.0, 0.0], None, 1e-12, DistanceGenerator.tsallis(0.5))
        assert np.allclose(out, pi_s, atol=1e-6)

    @pytest.mark.parametrize("h", [None, Regularizer.entropy(0.1, 3)], ids=["plain", "entropy"])
    def test_tsallis_prox_is_minimizer(self, h):
        """Test that no random feasible point beats the prox output."""
        rng = np.random.default_rng(1)
        dgf = DistanceGenerator.tsallis(0.3)
        pi_s = np.array([0.2, 0.5, 0.3])
        q = np.array([0.9, 0.1, 0.5])
        reg = h or Regularizer.none()
        out = spmd_step(pi_s, q, h, 2.0, dgf)
        assert out.sum() == pytest.approx(1.0, abs=1e-10)
        assert np.all(out > 0.0)
        best = prox_objective(pi_s, q, reg, 2.0, dgf, out)
        for candidate in _random_simplex(rng, 3, 1000):
            assert best <= prox_objective(pi_s, q, reg, 2.0, dgf, candidate) + 1e-9

    def test_large_step_approaches_best_response(self):
        """Test that a huge stepsize moves almost all mass to argmin q."""
        out = spmd_step([0.5, 0.5], [1.0, 0.0], None, 1e6, DistanceGenerator.kl())
        assert out[1] > 1.0 - 1e-9
        assert np.array_equal(best_response([1.0, 0.0]), [0.0, 1.0])

    def test_rejects_nonpositive_stepsize(self):
        """Test that eta must be positive."""
        with pytest.raises(InvalidInputError):
            spmd_step([0.5, 0.5], [0.0, 1.0], None, 0.0, DistanceGenerator.kl())

    def test_rejects_nonfinite_q(self):
        """Test that an infinite q row signals a failed multiplier search."""
        with pytest.raises(BisectionFailed):
            spmd_step([0.5, 0.5], [np.inf, 0.0], None, 1.0, DistanceGenerator.tsallis(0.5))

    def test_update_policy_applies_every_state(self, garnet, uniform_policy):
        """Test that update_policy moves every row toward the greedy action."""
        q = exact_q(garnet, uniform_policy)
        config = SpmdConfig(alpha=1.0, k=4, dgf=DistanceGenerator.kl())
        pi = update_policy(uniform_policy, q, None, 1.0, config)
        greedy = np.argmin(q, axis=1)
        assert np.all(pi.probs[np.arange(4), greedy] > 0.5)


class TestSpmdRun:
    """Tests for the SPMD loop with exact and stochastic estimators."""

    @pytest.mark.slow
    def test_exact_q_converges(self):
        """Test a 20x gap reduction in 500 exact-Q iterations."""
        mdp = gen_garnet(3, 2, 3, seed=0, gamma=0.8)
        config = SpmdConfig(alpha=10.0 * math.sqrt(500), k=500, dgf=DistanceGenerator.kl())
        _, record = spmd_run(mdp, lambda pi, t: exact_q(mdp, pi), config)
        assert record.summary["final_gap"] <= 0.05 * record.summary["initial_gap"]
        assert record.summary["final_gap"] <= record.summary["initial_gap"]

    def test_single_state_has_zero_gap(self, one_state_mdp):
        """Test that the only policy of a 1-state 1-action MDP is optimal."""
        config = SpmdConfig(alpha=1.0, k=4, dgf=DistanceGenerator.tsallis(0.5))
        _, record = spmd_run(one_state_mdp, lambda pi, t: exact_q(one_state_mdp, pi), config)
        assert record.summary["final_gap"] == pytest.approx(0.0, abs=1e-12)

    def test_constant_cost_gap_zero_throughout(self, constant_cost_mdp):
        """Test that every iterate is optimal when all costs agree."""
        config = SpmdConfig(alpha=1.0, k=6, dgf=DistanceGenerator.kl())
        _, record = spmd_run(constant_cost_mdp, lambda pi, t: exact_q(constant_cost_mdp, pi), config)
        assert np.allclose(record.column("gap_linf"), 0.0, atol=1e-10)

    def test_record_columns_and_samples(self, garnet):
        """Test per-iteration rows, diagnostics and the sample counter."""
        config = SpmdConfig(alpha=1.0, k=5, dgf=DistanceGenerator.kl())

        def estimator(pi, t):
            return EstimateResult(q=exact_q(garnet, pi), samples=10, diagnostics={"m_used": t + 1})

        _, record = spmd_run(garnet, estimator, config, diagnostics=("m_used",))
        assert record.column("iter").tolist() == [0, 1, 2, 3, 4]
        assert record.column("samples_cum").tolist() == [10, 20, 30, 40, 50]
        assert record.column("m_used").tolist() == [1, 2, 3, 4, 5]
        assert record.summary["total_samples"] == 50

    def test_starting_policy_is_used(self, garnet):
        """Test that row 0 describes pi0."""
        pi0 = Policy.deterministic([0, 0, 0, 0], 2)
        config = SpmdConfig(alpha=1.0, k=4, dgf=DistanceGenerator.kl())
        seen = []

        def estimator(pi, t):
            seen.append(pi)
            return exact_q(garnet, pi)

        spmd_run(garnet, estimator, config, pi0=pi0)
        assert seen[0] is pi0

    def test_estimator_errors_propagate(self, garnet):
        """Test that estimator failures are not swallowed."""
        config = SpmdConfig(alpha=1.0, k=4, dgf=DistanceGenerator.kl())

        def estimator(pi, t):
            raise InvalidInputError("boom")

        with pytest.raises(InvalidInputError, match="boom"):
            spmd_run(garnet, estimator, config)
