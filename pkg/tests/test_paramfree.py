"""Tests for the parameter-free doubling driver and its workflow nodes."""
import math
from unittest.mock import patch

import numpy as np
import pytest
from langgraph.graph import END

from drivers.paramfree import (
    SMALL_ERROR_KAPPA,
    DoublingContext,
    build_workflow,
    epoch_count,
    initial_state,
    kappa_presets,
    paramfree_run,
)
from errors import InvalidInputError
from linear_fa.features import identity_features
from mdp.generators import gen_garnet
from models import GapEstimate, Policy, RunRecord
from nodes import certificate_router
from samplers.stream import SampleStream

FAIL = GapEstimate(g=[1e6, 1e6, 1e6, 1e6], M=1, varsigma=0.0)
PASS = GapEstimate(g=[0.0, 0.0, 0.0, 0.0], M=1, varsigma=0.0)


def _policies(n):
    return [Policy.deterministic([i % 2] * 4, 2) for i in range(n)]


def _fake_spmd(policies):
    """Return the given policies in turn, one per epoch."""
    results = iter(policies)

    def run(*args, **kwargs):
        return next(results), RunRecord(columns=["iter"])

    return run


class TestEpochCount:
    """Tests for the number of doubling epochs."""

    def test_kappa_one(self):
        """Test E = 0 at kappa = 1."""
        assert epoch_count(1.0) == 0

    def test_power_of_two(self):
        """Test E = 5 at kappa = 1/32."""
        assert epoch_count(0.03125) == 5

    def test_rounds_up(self):
        """Test E = ceil(log2(1/kappa))."""
        assert epoch_count(0.3) == 2

    @pytest.mark.parametrize("kappa", [0.0, -0.1, 1.5])
    def test_rejects_out_of_range(self, kappa):
        """Test kappa in (0, 1]."""
        with pytest.raises(InvalidInputError):
            epoch_count(kappa)


class TestKappaPresets:
    """Tests for the visitation-bound presets."""

    def test_with_frequency(self):
        """Test (1 - gamma) f / |S| = 0.03125."""
        preset = kappa_presets("with_frequency", 0.75, 4, f=0.5)
        assert preset.underline_kappa == pytest.approx(0.03125)
        assert preset.f == 0.5
        assert not preset.zero_state_exploration

    def test_with_frequency_needs_f(self):
        """Test that f = 0 is rejected."""
        with pytest.raises(InvalidInputError):
            kappa_presets("with_frequency", 0.75, 4, f=0.0)

    def test_small_approx_error_default(self):
        """Test f = 0, no state exploration and the default bound."""
        preset = kappa_presets("small_approx_error", 0.75, 4, f=0.5)
        assert preset.f == 0.0
        assert preset.zero_state_exploration
        assert preset.underline_kappa == SMALL_ERROR_KAPPA == 2.0 ** -10

    def test_small_approx_error_caller_bound(self):
        """Test that a supplied bound is kept."""
        assert kappa_presets("small_approx_error", 0.75, 4, underline_kappa=0.125).underline_kappa == 0.125

    def test_unknown_mode(self):
        """Test that unknown modes are rejected."""
        with pytest.raises(InvalidInputError):
            kappa_presets("optimistic", 0.75, 4)


class TestCertificateRouter:
    """Tests for routing after the certificate."""

    def test_certified_stops(self):
        """Test END once certified."""
        assert certificate_router({"certified": True, "epoch": 0, "max_epoch": 3}) == END

    def test_out_of_epochs_stops(self):
        """Test END after the last epoch."""
        assert certificate_router({"certified": False, "epoch": 4, "max_epoch": 3}) == END

    def test_continues(self):
        """Test another epoch while guesses remain."""
        assert certificate_router({"certified": False, "epoch": 3, "max_epoch": 3}) == "epoch"


class TestDoublingContext:
    """Tests for per-epoch parameters."""

    @pytest.fixture
    def context(self, garnet, tiny_desk):
        return DoublingContext(
            stream=SampleStream(garnet, seed=0),
            fmap=identity_features(8),
            epsilon=0.5,
            delta=0.1,
            f=0.5,
            underline_kappa=0.25,
            scale=tiny_desk,
        )

    def test_epoch_config_uses_half_delta(self, context):
        """Test that SPMD+CTD runs at confidence delta / 2."""
        config = context.epoch_config(0.5)
        assert config.delta == pytest.approx(0.05)
        assert config.underline_kappa == 0.5
        assert config.mode == "desk"

    def test_zero_state_exploration(self, context):
        """Test that the small-error regime switches state exploration off."""
        context.zero_state_exploration = True
        assert context.epoch_config(0.5).eps_state == 0.0
        assert context.certificate_exploration(4) > 0.0

    def test_epoch_length_grows_as_kappa_halves(self, context):
        """Test non-decreasing T and N over successive guesses at formula scale."""
        context.scale = None
        configs = [context.epoch_config(2.0 ** -ep) for ep in range(3)]
        assert [c.T for c in configs] == sorted(c.T for c in configs)
        assert [c.N for c in configs] == sorted(c.N for c in configs)

    def test_gap_replicates_follow_scale(self, context):
        """Test the desk cap on M."""
        assert context.gap_replicates == 2

    def test_oracle_gap_without_oracle(self, context):
        """Test NaN when no oracle is attached."""
        assert math.isnan(context.oracle_gap(Policy.uniform(4, 2)))


class TestWorkflow:
    """Tests for the epoch -> certify loop."""

    def test_build_workflow(self, garnet):
        """Test that the graph compiles with both nodes."""
        context = DoublingContext(
            stream=SampleStream(garnet, seed=0),
            fmap=identity_features(8),
            epsilon=0.5,
            delta=0.1,
            f=0.5,
            underline_kappa=0.5,
        )
        app = build_workflow(context)
        assert {"epoch", "certify"} <= set(app.get_graph().nodes)

    def test_initial_state(self):
        """Test the starting guess kappa = 1 at epoch 0."""
        state = initial_state(3)
        assert state["epoch"] == 0
        assert state["kappa_tilde"] == 1.0
        assert state["history"] == []

    @patch("nodes.certify.estimate_gap")
    @patch("nodes.epoch.spmd_ctd_run")
    def test_early_exit(self, mock_spmd, mock_gap, garnet, tiny_desk):
        """Test that a certified first epoch ends the run."""
        policies = _policies(1)
        mock_spmd.side_effect = _fake_spmd(policies)
        mock_gap.return_value = PASS

        policy, record = paramfree_run(
            SampleStream(garnet, seed=0), identity_features(8), 0.5, 0.1, 0.5, 2.0 ** -5, scale=tiny_desk
        )

        assert policy is policies[0]
        assert mock_spmd.call_count == 1
        assert len(record) == 1
        assert record.summary["certified"] is True
        assert record.summary["epoch"] == 0
        assert record.summary["max_epoch"] == 5

    @patch("nodes.certify.estimate_gap")
    @patch("nodes.epoch.spmd_ctd_run")
    def test_halves_until_certified(self, mock_spmd, mock_gap, garnet, tiny_desk):
        """Test guesses 1, 1/2, 1/4 and the policy of the certified epoch."""
        policies = _policies(3)
        mock_spmd.side_effect = _fake_spmd(policies)
        mock_gap.side_effect = [FAIL, FAIL, PASS]

        policy, record = paramfree_run(
            SampleStream(garnet, seed=0), identity_features(8), 0.5, 0.1, 0.5, 2.0 ** -5, scale=tiny_desk
        )

        assert policy is policies[2]
        assert record.column("kappa_tilde").tolist() == [1.0, 0.5, 0.25]
        assert record.column("certificate_pass").tolist() == [0, 0, 1]
        assert [c.args[2].underline_kappa for c in mock_spmd.call_args_list] == [1.0, 0.5, 0.25]
        assert record.summary["certified"] is True
        assert record.summary["errors"] == []

    @patch("nodes.certify.estimate_gap")
    @patch("nodes.epoch.spmd_ctd_run")
    def test_returns_last_epoch_when_never_certified(self, mock_spmd, mock_gap, garnet, tiny_desk):
        """Test E + 1 epochs and the epoch-E policy when nothing passes."""
        policies = _policies(3)
        mock_spmd.side_effect = _fake_spmd(policies)
        mock_gap.return_value = FAIL

        policy, record = paramfree_run(
            SampleStream(garnet, seed=0), identity_features(8), 0.5, 0.1, 0.5, 0.25, scale=tiny_desk
        )

        assert policy is policies[2]
        assert len(record) == 3
        assert record.summary["certified"] is False
        assert record.summary["epoch"] == 2
        assert len(record.summary["errors"]) == 1

    @patch("nodes.certify.estimate_gap")
    @patch("nodes.epoch.spmd_ctd_run")
    def test_kappa_one_single_epoch(self, mock_spmd, mock_gap, garnet, tiny_desk):
        """Test that kappa = 1 runs exactly one epoch even when it fails."""
        mock_spmd.side_effect = _fake_spmd(_policies(1))
        mock_gap.return_value = FAIL

        _, record = paramfree_run(
            SampleStream(garnet, seed=0), identity_features(8), 0.5, 0.1, 0.5, 1.0, scale=tiny_desk
        )

        assert mock_spmd.call_count == 1
        assert len(record) == 1
        assert record.summary["certified"] is False

    @patch("nodes.certify.estimate_gap")
    @patch("nodes.epoch.spmd_ctd_run")
    def test_certificate_settings(self, mock_spmd, mock_gap, garnet, tiny_desk):
        """Test varsigma = epsilon / 2 and the desk-capped M."""
        mock_spmd.side_effect = _fake_spmd(_policies(1))
        mock_gap.return_value = PASS

        paramfree_run(SampleStream(garnet, seed=0), identity_features(8), 0.5, 0.1, 0.5, 1.0, scale=tiny_desk)

        kwargs = mock_gap.call_args.kwargs
        assert kwargs["varsigma"] == pytest.approx(0.25)
        assert kwargs["M"] == 2
        assert kwargs["eps_state"] >= 0.2

    def test_rejects_bad_delta(self, garnet):
        """Test delta in (0, 1)."""
        with pytest.raises(InvalidInputError):
            paramfree_run(SampleStream(garnet, seed=0), identity_features(8), 0.5, 1.0, 0.5, 0.5)


class TestParamfreeRun:
    """End-to-end runs on small instances."""

    def test_constant_costs_certify_first_epoch(self, constant_cost_mdp, tiny_desk):
        """Test that a constant-cost MDP certifies at epoch 0."""
        stream = SampleStream(constant_cost_mdp, seed=0)
        _, record = paramfree_run(
            stream, identity_features(6), 0.5, 0.05, 0.5, 0.125, scale=tiny_desk, oracle=constant_cost_mdp
        )
        assert len(record) == 1
        assert record.summary["certified"] is True
        assert record.summary["total_samples"] == stream.counter
        assert record.summary["final_gap_oracle"] == pytest.approx(0.0, abs=1e-10)

    @pytest.mark.slow
    def test_garnet_certified_gap_within_bound(self, tiny_desk):
        """Test a certified policy whose oracle gap respects the certified bound."""
        mdp = gen_garnet(4, 2, 4, seed=0, gamma=0.8)
        preset = kappa_presets("with_frequency", mdp.gamma, 4, f=0.5)
        _, record = paramfree_run(
            SampleStream(mdp, seed=0), identity_features(8), 0.5, 0.1, preset.f, preset.underline_kappa,
            scale=tiny_desk, oracle=mdp,
        )
        assert record.summary["certified"] is True
        assert record.summary["final_gap_oracle"] <= record.summary["certified_gap_bound"]

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", range(5))
    def test_small_error_path_certifies(self, seed, tiny_desk):
        """Test that identity features without state exploration terminate via the certificate."""
        mdp = gen_garnet(4, 2, 4, seed=0, gamma=0.8)
        preset = kappa_presets("small_approx_error", mdp.gamma, 4, underline_kappa=0.25)
        _, record = paramfree_run(
            SampleStream(mdp, seed=seed), identity_features(8), 0.5, 0.1, preset.f, preset.underline_kappa,
            scale=tiny_desk, zero_state_exploration=preset.zero_state_exploration,
        )
        assert record.summary["certified"] is True
        assert np.all(np.diff(record.column("samples_cum")) >= 0)
