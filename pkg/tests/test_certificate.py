"""Tests for the advantage-gap certificate."""
import numpy as np
import pytest

from drivers.certificate import (
    certificate_passes,
    certificate_threshold,
    certified_gap_bound,
    estimate_gap,
    exact_gap,
    gap_concentration_radius,
    gap_from_estimates,
    gap_replicates,
)
from errors import InvalidInputError
from mdp.generators import gen_garnet, random_policy
from mdp.oracles import exact_q, exact_value, solve_optimal
from models import DeskScale, GapEstimate, Policy, TabularMdp
from samplers.stream import SampleStream


@pytest.fixture
def two_action_mdp():
    """1 state, 2 actions with costs 0.2 and 0.8, gamma = 0.5."""
    return TabularMdp(transition=np.ones((1, 2, 1)), cost=[[0.2, 0.8]], gamma=0.5)


class TestExactGap:
    """Tests for the oracle advantage gap."""

    def test_zero_at_optimum(self, garnet):
        """Test g = 0 for the optimal policy."""
        pi_star, _ = solve_optimal(garnet)
        assert np.allclose(exact_gap(garnet, pi_star), 0.0, atol=1e-8)

    def test_single_action_is_zero(self, one_state_mdp):
        """Test g = 0 when there is nothing to choose."""
        assert exact_gap(one_state_mdp, Policy.uniform(1, 1))[0] == pytest.approx(0.0, abs=1e-12)

    def test_matches_value_minus_min_q(self, garnet):
        """Test g(s) = V(s) - min_a Q(s, a) without regularization."""
        pi = random_policy(4, 2, seed=5)
        expected = exact_value(garnet, pi) - exact_q(garnet, pi).min(axis=1)
        assert np.allclose(exact_gap(garnet, pi), expected, atol=1e-10)

    def test_sandwich(self):
        """Test g(s) <= V(s) - V*(s) <= max g / (1 - gamma) on random instances."""
        for seed in range(50):
            mdp = gen_garnet(4, 3, 2, seed=seed, gamma=0.7)
            pi = random_policy(4, 3, seed=seed + 100)
            _, v_star = solve_optimal(mdp)
            g = exact_gap(mdp, pi)
            diff = exact_value(mdp, pi) - v_star
            assert np.all(g <= diff + 1e-8)
            assert np.all(diff <= g.max() / (1.0 - mdp.gamma) + 1e-8)


class TestGapFromEstimates:
    """Tests for averaging centred advantages."""

    def test_exact_q_gives_exact_gap(self, garnet):
        """Test that injecting Q^pi reproduces the oracle gap."""
        pi = random_policy(4, 2, seed=2)
        estimate = gap_from_estimates([exact_q(garnet, pi)] * 3, pi)
        assert estimate.M == 3
        assert np.allclose(estimate.g, exact_gap(garnet, pi), atol=1e-10)

    def test_state_constant_is_removed(self):
        """Test invariance to adding a per-state constant to Q."""
        pi = Policy(probs=[[0.3, 0.7], [0.6, 0.4]])
        q = np.array([[1.0, 0.5], [0.2, 0.9]])
        shifted = q + np.array([[10.0], [-3.0]])
        assert np.allclose(gap_from_estimates(q, pi).g, gap_from_estimates(shifted, pi).g, atol=1e-12)

    def test_single_table(self):
        """Test that a 2-D table counts as one estimate."""
        pi = Policy.uniform(2, 2)
        assert gap_from_estimates(np.zeros((2, 2)), pi).M == 1

    def test_rejects_shape_mismatch(self):
        """Test that Q must match the policy shape."""
        with pytest.raises(InvalidInputError):
            gap_from_estimates(np.zeros((3, 2)), Policy.uniform(2, 2))


class TestEstimateGap:
    """Tests for the Monte-Carlo gap estimate."""

    def test_rejects_zero_replicates(self, stream, uniform_policy):
        """Test M >= 1."""
        with pytest.raises(InvalidInputError):
            estimate_gap(stream, uniform_policy, 0.1, 0, 0.2)

    def test_single_action_is_zero(self, one_state_mdp):
        """Test g-hat = 0 regardless of samples."""
        stream = SampleStream(one_state_mdp, seed=0)
        estimate = estimate_gap(stream, Policy.uniform(1, 1), 0.1, 2, 0.5)
        assert estimate.g_max == pytest.approx(0.0, abs=1e-12)
        assert estimate.samples == stream.counter

    def test_deterministic_instance(self, two_action_mdp):
        """Test g-hat within 2 varsigma of V - min Q = 0.6."""
        pi = Policy.deterministic([1], 2)
        stream = SampleStream(two_action_mdp, seed=0)
        estimate = estimate_gap(stream, pi, 0.01, 2, 0.5)
        assert estimate.g[0] == pytest.approx(0.6, abs=0.02)

    def test_accounting(self, garnet, uniform_policy):
        """Test that the reported samples equal the stream advance."""
        stream = SampleStream(garnet, seed=4)
        rollout_start = stream.counter
        estimate = estimate_gap(stream, uniform_policy, 0.1, 3, 0.2)
        assert estimate.samples == stream.counter - rollout_start
        assert estimate.samples > 0

    @pytest.mark.slow
    def test_concentration(self, garnet, uniform_policy):
        """Test that deviations beyond the concentration radius are rare."""
        g = exact_gap(garnet, uniform_policy)
        radius = gap_concentration_radius(garnet.gamma, 8, 0.2, 20, 0.05)
        failures = 0
        for seed in range(20):
            estimate = estimate_gap(SampleStream(garnet, seed=seed), uniform_policy, 0.05, 20, 0.2)
            failures += int(np.max(np.abs(estimate.g - g)) > radius)
        assert failures / 20 <= 0.2


class TestThreshold:
    """Tests for the termination test."""

    def test_threshold_value(self):
        """Test 4 * 0.5 * log2(8)^2 = 18."""
        assert certificate_threshold(0.5, 1, 1, 1.0) == pytest.approx(18.0)

    def test_boundary_passes(self):
        """Test that equality passes."""
        at = GapEstimate(g=[18.0], M=1, varsigma=0.0)
        above = GapEstimate(g=[18.0 + 1e-9], M=1, varsigma=0.0)
        assert certificate_passes(at, 0.5, 1, 1, 1.0)
        assert not certificate_passes(above, 0.5, 1, 1, 1.0)

    def test_zero_gap_passes(self):
        """Test g-hat = 0 always passes."""
        assert certificate_passes(GapEstimate(g=[0.0, 0.0], M=1, varsigma=0.0), 1e-6, 10, 4, 0.1)

    def test_monotone_in_epsilon(self):
        """Test passing at epsilon implies passing at 2 epsilon."""
        estimate = GapEstimate(g=[0.3, 1.2], M=4, varsigma=0.0)
        for eps in (0.001, 0.01, 0.05, 0.1):
            if certificate_passes(estimate, eps, 16, 8, 0.1):
                assert certificate_passes(estimate, 2 * eps, 16, 8, 0.1)

    def test_zero_iterations_treated_as_one(self):
        """Test that k = 0 keeps the log finite."""
        assert certificate_threshold(0.5, 0, 1, 1.0) == certificate_threshold(0.5, 1, 1, 1.0)

    def test_certified_gap_bound(self):
        """Test 6 * 0.5 / 0.25 * log2(8)^2 = 108."""
        assert certified_gap_bound(0.5, 0.75, 1, 1, 1.0) == pytest.approx(108.0)

    def test_radius_shrinks_with_replicates(self):
        """Test that quadrupling M halves the statistical part."""
        wide = gap_concentration_radius(0.75, 8, 0.1, 4, 0.01) - 0.02
        narrow = gap_concentration_radius(0.75, 8, 0.1, 16, 0.01) - 0.02
        assert wide == pytest.approx(2.0 * narrow)


class TestGapReplicates:
    """Tests for the number of gap estimates."""

    def test_formula(self):
        """Test ceil(8 / (0.0625 * 0.25)) = 512."""
        assert gap_replicates(0.75, 0.5) == 512

    def test_desk_factor(self):
        """Test the multiplicative scale-down."""
        assert gap_replicates(0.75, 0.5, DeskScale(gap_factor=0.5)) == 256

    def test_desk_cap(self):
        """Test the absolute cap."""
        assert gap_replicates(0.75, 0.5, DeskScale(gap_replicates=2)) == 2

    def test_at_least_one(self):
        """Test that an extreme factor still leaves one estimate."""
        assert gap_replicates(0.75, 0.5, DeskScale(gap_factor=1e-9)) == 1
