"""Parameter-free driver: doubling trick over the visitation lower bound, terminated by the gap certificate."""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from langgraph.graph import END, START, StateGraph

from drivers.certificate import certified_gap_bound, gap_replicates
from drivers.spmd_ctd import OriginSelector, desk_params, state_exploration, synth_params
from errors import InvalidInputError
from mdp.oracles import optimality_gap, solve_optimal
from models import (
    DeskScale,
    DoublingState,
    FeatureMap,
    KappaPreset,
    Policy,
    RunRecord,
    SpmdCtdConfig,
    TabularMdp,
)
from nodes import certificate_router, create_certify_node, create_epoch_node
from samplers.base import TrajectorySampler

logger = logging.getLogger(__name__)

SMALL_ERROR_KAPPA = 2.0 ** -10

RECORD_COLUMNS = [
    "iter",
    "samples_cum",
    "kappa_tilde",
    "k",
    "ctd_samples",
    "certificate_samples",
    "gap_max_est",
    "certificate_threshold",
    "certificate_pass",
    "gap_linf",
]


def epoch_count(underline_kappa: float) -> int:
    """E = ceil(log2(1 / kappa)); the last epoch's guess 2^-E is within a factor 2 of kappa."""
    if not 0.0 < underline_kappa <= 1.0:
        raise InvalidInputError(f"underline_kappa={underline_kappa} must lie in (0, 1]")
    return max(0, math.ceil(math.log2(1.0 / underline_kappa)))


def kappa_presets(
    mode: str,
    gamma: float,
    n_states: int,
    f: float = 0.0,
    underline_kappa: Optional[float] = None,
) -> KappaPreset:
    """
    Visitation lower bound for the two supported exploration regimes.

    with_frequency: a fraction f of CTD origins is drawn uniformly, which
    guarantees every state at least (1 - gamma) f / |S| discounted mass.
    small_approx_error: no state exploration at all (f = 0, eps_state = 0);
    the caller supplies the bound, or a conservative default is used.

    Args:
        mode: "with_frequency" or "small_approx_error"
        gamma: Discount factor
        n_states: |S|
        f: Uniform-origin frequency (with_frequency only)
        underline_kappa: Caller bound (small_approx_error only)

    Returns:
        KappaPreset with the bound and the matching exploration switches
    """
    if mode == "with_frequency":
        if f <= 0.0:
            raise InvalidInputError("with_frequency needs f > 0, otherwise the visitation bound is 0")
        return KappaPreset(mode=mode, underline_kappa=(1.0 - gamma) * f / n_states, f=f)
    if mode == "small_approx_error":
        kappa = SMALL_ERROR_KAPPA if underline_kappa is None else underline_kappa
        return KappaPreset(mode=mode, underline_kappa=kappa, f=0.0, zero_state_exploration=True)
    raise InvalidInputError(f"Unknown kappa mode: {mode}")


@dataclass
class DoublingContext:
    """Everything the epoch and certify nodes share across the doubling loop."""

    stream: TrajectorySampler
    fmap: FeatureMap
    epsilon: float
    delta: float
    f: float
    underline_kappa: float
    zero_state_exploration: bool = False
    scale: Optional[DeskScale] = None
    oracle: Optional[TabularMdp] = None
    s_or_selector: Optional[OriginSelector] = None
    max_window: Optional[int] = None
    _v_star: Optional[np.ndarray] = field(default=None, init=False, repr=False)

    @property
    def n_states(self) -> int:
        return self.stream.n_states

    @property
    def n_actions(self) -> int:
        return self.stream.n_actions

    @property
    def gamma(self) -> float:
        return self.stream.gamma

    @property
    def gap_replicates(self) -> int:
        return gap_replicates(self.gamma, self.epsilon, self.scale)

    def epoch_config(self, kappa_tilde: float) -> SpmdCtdConfig:
        """SPMD+CTD parameters for one guess of the visitation bound, at confidence delta / 2."""
        config = synth_params(
            self.gamma, self.fmap, self.n_actions, self.n_states,
            self.epsilon, self.delta / 2.0, kappa_tilde, self.f,
        )
        if self.zero_state_exploration:
            config = config.model_copy(update={"eps_state": 0.0})
        if self.scale is not None:
            config = desk_params(config, self.scale)
        return config

    def certificate_exploration(self, k: int) -> float:
        # The certificate needs a positive rarity threshold even when CTD runs without state exploration
        eps = state_exploration(self.gamma, max(k, 1), self.n_states, self.delta / 2.0)
        return self.scale.exploration(eps) if self.scale is not None else eps

    def oracle_gap(self, pi: Policy) -> float:
        if self.oracle is None:
            return float("nan")
        if self._v_star is None:
            _, self._v_star = solve_optimal(self.oracle)
        return optimality_gap(self.oracle, pi, self._v_star)


def build_workflow(context: DoublingContext):
    """Build the epoch -> certify loop as a LangGraph workflow."""
    epoch_node = create_epoch_node(context)
    certify_node = create_certify_node(context)

    workflow = StateGraph(DoublingState)

    workflow.add_node("epoch", epoch_node)
    workflow.add_node("certify", certify_node)

    workflow.add_edge(START, "epoch")
    workflow.add_edge("epoch", "certify")

    # Either stop (certified or out of epochs) or halve the guess and go again
    workflow.add_conditional_edges("certify", certificate_router, {
        "epoch": "epoch",
        END: END
    })

    return workflow.compile()


def initial_state(max_epoch: int) -> DoublingState:
    return {
        "epoch": 0,
        "kappa_tilde": 1.0,
        "max_epoch": max_epoch,
        "iterations": 0,
        "certified": False,
        "policy": None,
        "gap_estimate": None,
        "ctd_samples": 0,
        "total_samples": 0,
        "history": [],
        "errors": [],
    }


def paramfree_run(
    stream: TrajectorySampler,
    fmap: FeatureMap,
    epsilon: float,
    delta: float,
    f: float,
    underline_kappa: float,
    scale: Optional[DeskScale] = None,
    oracle: Optional[TabularMdp] = None,
    zero_state_exploration: bool = False,
    s_or_selector: Optional[OriginSelector] = None,
    max_window: Optional[int] = None,
) -> tuple[Policy, RunRecord]:
    """
    Run SPMD+CTD with kappa guesses 1, 1/2, ..., 2^-E and return the first certified policy.

    Every epoch restarts from the uniform policy on the shared stream. When no
    epoch certifies, the policy of epoch E is returned.

    Args:
        stream: Trajectory sampler shared by every epoch
        fmap: Feature map
        epsilon: Target accuracy
        delta: Failure probability, split evenly between SPMD+CTD and the certificates
        f: Uniform-origin frequency of CTD
        underline_kappa: Lower bound on the visitation mass, in (0, 1]
        scale: Desk-mode scale-down of every formula parameter
        oracle: True MDP for gap diagnostics only
        zero_state_exploration: Run CTD with eps_state = 0 (small approximation error regime)
        s_or_selector: Origin-state callback forwarded to SPMD+CTD
        max_window: Cap on any single certificate collection

    Returns:
        Tuple of (returned policy, record with one row per epoch)
    """
    if not 0.0 < delta < 1.0:
        raise InvalidInputError(f"delta={delta} must lie in (0, 1)")
    max_epoch = epoch_count(underline_kappa)
    context = DoublingContext(
        stream=stream,
        fmap=fmap,
        epsilon=epsilon,
        delta=delta,
        f=f,
        underline_kappa=underline_kappa,
        zero_state_exploration=zero_state_exploration,
        scale=scale,
        oracle=oracle,
        s_or_selector=s_or_selector,
        max_window=max_window,
    )
    logger.info(
        f"Parameter-free run: epsilon={epsilon}, delta={delta}, kappa={underline_kappa:.4g}, "
        f"E={max_epoch}, M={context.gap_replicates}"
    )

    app = build_workflow(context)
    start = stream.counter
    # Two supersteps per epoch plus slack
    final_state = app.invoke(initial_state(max_epoch), config={"recursion_limit": 2 * max_epoch + 10})

    record = RunRecord(columns=RECORD_COLUMNS)
    for entry in final_state["history"]:
        record.append(**{name: entry[name] for name in RECORD_COLUMNS})

    last = final_state["history"][-1]
    record.summary.update(
        certified=bool(final_state["certified"]),
        epoch=int(last["iter"]),
        max_epoch=max_epoch,
        total_samples=int(stream.counter - start),
        final_gap_oracle=float(last["gap_linf"]),
        certified_gap_bound=certified_gap_bound(
            epsilon, context.gamma, int(last["k"]), context.n_states, delta / 2.0
        ),
        errors=list(final_state["errors"]),
    )
    if final_state["errors"]:
        for error in final_state["errors"]:
            logger.warning(f"Error: {error}")
    return final_state["policy"], record
