"""Tests for SPMD driven by robust CTD estimates."""
import math
from unittest.mock import patch

import numpy as np
import pytest

from drivers.spmd_ctd import (
    desk_params,
    last_iterate_gap_bound,
    replicate_count,
    spmd_ctd_run,
    state_exploration,
    synth_params,
    weight_floor,
)
from errors import InvalidInputError
from linear_fa.ctd import robust_ctd
from linear_fa.features import identity_features
from linear_fa.operator import build_weights, stepsize_cap
from mdp.generators import gen_garnet, random_policy
from mdp.oracles import mixed_visitation, optimality_gap, solve_optimal
from models import DeskScale, Policy, mixing_floor
from samplers.stream import SampleStream

DESK = DeskScale(
    k_max=40, n_max=2000, iota_factor=100, m_max=30, replicates=3, gap_replicates=8, eps_state_floor=0.1
)


@pytest.fixture
def theory():
    """Full-scale parameters for a 2-state 2-action instance at gamma = 0.75."""
    return synth_params(0.75, identity_features(4), 2, 2, 0.5, 0.1, 0.5, f=0.5)


@pytest.fixture(scope="module")
def desk_garnet_run():
    """4-state Garnet at gamma = 0.8 with identity features, run at the 'desk' preset from seed 0."""
    mdp = gen_garnet(4, 2, 4, seed=0, gamma=0.8)
    fmap = identity_features(8)
    config = desk_params(synth_params(0.8, fmap, 2, 4, 0.5, 0.1, 0.25, f=0.5), DESK)
    estimates = []

    def recording_ctd(*args, **kwargs):
        robust = robust_ctd(*args, **kwargs)
        estimates.append(robust.q)
        return robust

    stream = SampleStream(mdp, seed=0)
    with patch("drivers.spmd_ctd.robust_ctd", side_effect=recording_ctd):
        _, record = spmd_ctd_run(stream, fmap, config, oracle=mdp)
    return config, record, estimates, stream


class TestSynthParams:
    """Tests for formula-scale parameter synthesis."""

    def test_weight_floor(self):
        """Test (1 - gamma) kappa^2 / (4 |A|) = 7.8125e-3."""
        assert weight_floor(0.75, 0.5, 2) == pytest.approx(7.8125e-3)

    def test_action_exploration(self, theory):
        """Test eps_action = (1 - gamma) kappa / 4 = 0.03125."""
        assert theory.eps_action == pytest.approx(0.03125)
        assert theory.w_floor == pytest.approx(7.8125e-3)
        assert theory.mu_floor == pytest.approx(7.8125e-3)

    def test_halving_kappa(self, theory):
        """Test that halving kappa quarters the floor and quadruples T."""
        half = synth_params(0.75, identity_features(4), 2, 2, 0.5, 0.1, 0.25, f=0.5)
        assert half.w_floor == pytest.approx(theory.w_floor / 4.0)
        assert half.T == 4 * theory.T

    def test_stepsize_and_epoch(self, theory):
        """Test iota = (1 - gamma)/(512 Omega^2) and T = ceil(4096 Omega^2 / ((1 - gamma)^2 mu))."""
        assert theory.iota == pytest.approx(0.25 / 512.0)
        assert theory.T == math.ceil(4096.0 / (0.0625 * 7.8125e-3))

    def test_eta_and_replicates(self, theory):
        """Test eta = alpha / sqrt(k) and ceil(log2(4k/delta)) replicates."""
        assert theory.eta == pytest.approx(theory.alpha / math.sqrt(theory.k))
        assert theory.replicates == math.ceil(math.log2(4.0 * theory.k / 0.1))

    def test_state_exploration(self, theory):
        """Test the state-exploration formula."""
        expected = 0.25 / (343.0 ** 2 * math.log2(2.0 * theory.k * 2 / 0.1) * 4.0)
        assert theory.eps_state == pytest.approx(expected)
        assert state_exploration(0.75, 0, 2, 0.1) == 0.0

    def test_rejects_nonpositive_kappa(self):
        """Test that kappa must be positive."""
        with pytest.raises(InvalidInputError):
            synth_params(0.75, identity_features(4), 2, 2, 0.5, 0.1, 0.0)

    def test_rejects_large_epsilon(self):
        """Test epsilon < (1 - gamma)^-1."""
        with pytest.raises(InvalidInputError):
            synth_params(0.75, identity_features(4), 2, 2, 4.0, 0.1, 0.5)

    def test_replicate_count(self):
        """Test ceil(log2(4k/delta)) and the k = 0 edge."""
        assert replicate_count(4, 0.25) == 6
        assert replicate_count(0, 0.1) == 1

    def test_half_run_length(self, theory):
        """Test N = ceil(5061 T / w_floor * log2(2 T Omega^2 / ((1 - gamma)^4 mu eps^2)))."""
        log_arg = 2.0 * theory.T * theory.omega ** 2 / ((1.0 - 0.75) ** 4 * theory.mu_floor * 0.5 ** 2)
        assert theory.N == math.ceil(5061.0 * theory.T / theory.w_floor * math.log2(log_arg))
        assert log_arg > 2.0

    def test_last_iterate_bound(self, theory):
        """Test that epsilon scales the bound when eps_app = 0."""
        factor = math.log2(8.0 * theory.k * 2 / 0.1) ** 2
        assert last_iterate_gap_bound(theory) == pytest.approx(0.5 * factor)


class TestDeskParams:
    """Tests for the desk-scale reduction."""

    def test_caps_and_floors(self, theory):
        """Test k_max, the N = multiple-of-T rule and the mixing floor."""
        desk = desk_params(theory, DeskScale(k_max=5, iota_factor=100, m_max=3, replicates=2))
        assert desk.mode == "desk"
        assert desk.k == 5
        assert desk.N % desk.T == 0
        assert desk.m == max(3, mixing_floor(0.75, 1.0, theory.mu_floor, 2))
        assert desk.replicates == 2
        assert desk.eta == pytest.approx(theory.alpha / math.sqrt(5))

    def test_absolute_sample_cap(self, theory):
        """Test that n_max below one epoch cuts the epoch to N."""
        desk = desk_params(theory, DeskScale(k_max=4, n_max=100))
        assert desk.N == 100
        assert desk.T == 100

    def test_minimum_iterations(self, theory):
        """Test that a tiny k_factor still gives 4 iterations."""
        assert desk_params(theory, DeskScale(k_factor=1e-12)).k == 4

    def test_zero_iterations(self, theory):
        """Test that k_max = 0 switches SPMD off."""
        assert desk_params(theory, DeskScale(k_max=0)).k == 0

    def test_exploration_floor(self, theory):
        """Test that the desk floor lifts eps_state."""
        assert desk_params(theory, DeskScale(k_max=4, eps_state_floor=0.2)).eps_state == 0.2

    def test_switched_off_exploration_stays_off(self, theory):
        """Test that eps_state = 0 survives desk scaling."""
        off = theory.model_copy(update={"eps_state": 0.0})
        assert desk_params(off, DeskScale(k_max=4, eps_state_floor=0.2)).eps_state == 0.0


class TestCtdGuarantees:
    """Tests for the stepsize cap and mixing floor checked when CTD settings are built."""

    def test_theoretical_settings_pass(self, theory):
        """Test that synthesized parameters sit exactly at the stepsize cap."""
        ctd = theory.ctd_config(1)
        assert ctd.iota == pytest.approx(stepsize_cap(0.75, 1.0))
        assert ctd.s_or == 1
        assert ctd.m >= mixing_floor(0.75, theory.omega, theory.mu_floor, 2)

    def test_theoretical_stepsize_above_cap(self, theory):
        """Test that a doubled stepsize is rejected in theoretical mode."""
        with pytest.raises(InvalidInputError, match="cap"):
            theory.model_copy(update={"iota": 2.0 * theory.iota}).ctd_config(0)

    def test_mixing_cap_below_floor(self, theory):
        """Test that m under the floor is rejected in both modes."""
        with pytest.raises(InvalidInputError, match="floor"):
            theory.model_copy(update={"m": 1}).ctd_config(0)
        desk = desk_params(theory, DeskScale(k_max=4, iota_factor=100))
        with pytest.raises(InvalidInputError, match="floor"):
            desk.model_copy(update={"m": 1}).ctd_config(0)

    def test_desk_stepsize_may_exceed_cap(self, theory):
        """Test that desk scaling of iota passes while m keeps the floor."""
        desk = desk_params(theory, DeskScale(k_max=4, iota_factor=100, m_max=1))
        ctd = desk.ctd_config(0)
        assert ctd.iota > stepsize_cap(0.75, 1.0)
        assert ctd.m == mixing_floor(0.75, theory.omega, theory.mu_floor, 2)


class TestSpmdCtdRun:
    """Tests for the SPMD+CTD loop."""

    def test_zero_iterations_returns_start(self, garnet, tiny_desk):
        """Test that k = 0 returns pi0 without sampling."""
        config = desk_params(
            synth_params(0.8, identity_features(8), 2, 4, 0.5, 0.1, 0.25, f=0.5),
            tiny_desk.model_copy(update={"k_max": 0}),
        )
        stream = SampleStream(garnet, seed=0)
        pi0 = random_policy(4, 2, seed=1)
        policy, record = spmd_ctd_run(stream, identity_features(8), config, pi0=pi0)
        assert policy is pi0
        assert len(record) == 0
        assert stream.counter == 0

    def test_single_state_gap_zero(self, one_state_mdp):
        """Test that a 1-state 1-action MDP ends optimal."""
        config = desk_params(
            synth_params(0.5, identity_features(1), 1, 1, 0.5, 0.1, 0.5),
            DeskScale(k_max=4, iota_factor=100, n_max=50, m_max=20, replicates=1),
        )
        stream = SampleStream(one_state_mdp, seed=0)
        _, record = spmd_ctd_run(stream, identity_features(1), config, oracle=one_state_mdp)
        assert record.summary["final_gap"] == pytest.approx(0.0, abs=1e-12)
        assert record.summary["total_samples"] == stream.counter

    def test_desk_run_records_diagnostics(self, garnet, tiny_desk):
        """Test rows, oracle diagnostics and the kappa column."""
        config = desk_params(
            synth_params(0.8, identity_features(8), 2, 4, 0.5, 0.1, 0.25, f=0.5), tiny_desk
        )
        stream = SampleStream(garnet, seed=0)
        _, record = spmd_ctd_run(stream, identity_features(8), config, oracle=garnet)
        assert len(record) == config.k
        assert np.all(np.isfinite(record.column("q_est_error")))
        assert np.all(record.column("kappa_floor_used") == 0.25)
        assert record.summary["total_samples"] == stream.counter

    def test_origin_selector_is_called(self, garnet, tiny_desk):
        """Test that the callback chooses the origin at every iteration."""
        config = desk_params(
            synth_params(0.8, identity_features(8), 2, 4, 0.5, 0.1, 0.25, f=0.5), tiny_desk
        )
        calls = []

        def selector(t, stream):
            calls.append(t)
            return 0

        spmd_ctd_run(SampleStream(garnet, seed=0), identity_features(8), config, s_or_selector=selector)
        assert calls == list(range(config.k))

    def test_valid_kappa_bounds_weights(self, garnet):
        """Test min w >= weight floor when kappa is the true visitation floor."""
        gamma = garnet.gamma
        for seed in range(10):
            pi = random_policy(4, 2, seed)
            kappa = mixed_visitation(garnet, pi, seed % 4, 0.5).min()
            wm = build_weights(garnet, pi, identity_features(8), seed % 4, 0.5, (1.0 - gamma) * kappa / 4.0)
            assert wm.w_min >= weight_floor(gamma, kappa, 2) * (1.0 - 1e-12)

    def test_uniform_start_by_default(self, garnet, tiny_desk):
        """Test that row 0 evaluates the uniform policy."""
        config = desk_params(
            synth_params(0.8, identity_features(8), 2, 4, 0.5, 0.1, 0.25, f=0.5), tiny_desk
        )
        _, record = spmd_ctd_run(SampleStream(garnet, seed=3), identity_features(8), config, oracle=garnet)
        _, v_star = solve_optimal(garnet)
        assert record.rows[0]["gap_linf"] == pytest.approx(optimality_gap(garnet, Policy.uniform(4, 2), v_star))

    def test_skipped_weight_diagnostic_is_logged(self, garnet, tiny_desk):
        """Test that a degenerate weighting leaves w_min as NaN and logs a warning."""
        config = desk_params(
            synth_params(0.8, identity_features(8), 2, 4, 0.5, 0.1, 0.25, f=0.5), tiny_desk
        )
        with patch("drivers.spmd_ctd.build_weights", side_effect=InvalidInputError("degenerate")), \
                patch("drivers.spmd_ctd.logger") as mock_logger:
            _, record = spmd_ctd_run(SampleStream(garnet, seed=0), identity_features(8), config, oracle=garnet)
        assert np.all(np.isnan(record.column("w_min")))
        assert mock_logger.warning.call_count == config.k
        assert "degenerate" in mock_logger.warning.call_args[0][0]

    @pytest.mark.slow
    def test_desk_run_shrinks_gap(self, desk_garnet_run):
        """Test final gap <= 25% of the uniform start's gap."""
        config, record, _, stream = desk_garnet_run
        assert config.k == 40
        assert record.summary["final_gap"] <= 0.25 * record.summary["initial_gap"]
        assert record.summary["total_samples"] == stream.counter

    @pytest.mark.slow
    def test_robust_estimates_are_bounded(self, desk_garnet_run):
        """Test every aggregated estimate stays within 2 / (1 - gamma) with identity features."""
        config, _, estimates, _ = desk_garnet_run
        assert len(estimates) == config.k
        assert max(np.max(np.abs(q)) for q in estimates) <= 2.0 / (1.0 - 0.8)
