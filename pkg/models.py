"""Pydantic models and type definitions."""
import math
from functools import cached_property
from operator import add
from typing import Annotated, Any, Dict, List, Literal, Optional, TypedDict

import numpy as np
from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    PlainSerializer,
    model_validator,
)
from scipy.linalg import svdvals
from scipy.special import xlogy

from config import PROB_CLIP, SIMPLEX_TOL
from errors import InvalidInputError


def _frozen_array(dtype):
    def convert(value):
        arr = np.array(value, dtype=dtype)
        arr.setflags(write=False)
        return arr
    return convert


def _to_list(arr: np.ndarray) -> list:
    return arr.tolist()


FloatArray = Annotated[np.ndarray, BeforeValidator(_frozen_array(float)), PlainSerializer(_to_list, return_type=list)]
IntArray = Annotated[np.ndarray, BeforeValidator(_frozen_array(np.int64)), PlainSerializer(_to_list, return_type=list)]
BoolArray = Annotated[np.ndarray, BeforeValidator(_frozen_array(bool)), PlainSerializer(_to_list, return_type=list)]

ARRAY_CONFIG = ConfigDict(frozen=True, arbitrary_types_allowed=True)


def _cumulative_rows(table: np.ndarray) -> list:
    """Row-wise CDFs as nested lists, last entry pinned to exactly 1.0."""
    cdf = np.cumsum(table, axis=-1)
    cdf = cdf / cdf[..., -1:]
    cdf[..., -1] = 1.0
    return cdf.tolist()


# ---------------------------------------------------------------------------
# Environments and policies
# ---------------------------------------------------------------------------

class TabularMdp(BaseModel):
    """Finite discounted MDP: kernel P(s'|s,a), cost c(s,a) in [0,1], discount gamma."""
    model_config = ARRAY_CONFIG

    transition: FloatArray = Field(description="Kernel with shape (|S|, |A|, |S|)")
    cost: FloatArray = Field(description="Costs with shape (|S|, |A|), entries in [0, 1]")
    gamma: float = Field(ge=0.0, lt=1.0, description="Discount factor")

    @model_validator(mode="after")
    def _check_kernel(self):
        P, c = self.transition, self.cost
        if P.ndim != 3 or P.shape[0] != P.shape[2] or P.shape[0] == 0 or P.shape[1] == 0:
            raise ValueError(f"transition must have shape (S, A, S), got {P.shape}")
        if c.shape != P.shape[:2]:
            raise ValueError(f"cost shape {c.shape} does not match transition {P.shape[:2]}")
        if not (np.all(np.isfinite(P)) and np.all(np.isfinite(c))):
            raise ValueError("transition and cost must be finite")
        if np.any(P < 0):
            raise ValueError("transition probabilities must be nonnegative")
        sums = P.sum(axis=2)
        worst = float(np.max(np.abs(sums - 1.0)))
        if worst > SIMPLEX_TOL:
            s, a = np.unravel_index(np.argmax(np.abs(sums - 1.0)), sums.shape)
            raise ValueError(f"transition row (s={s}, a={a}) sums to {sums[s, a]!r}")
        if np.any(c < 0) or np.any(c > 1):
            raise ValueError("costs must lie in [0, 1]")
        return self

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def n_pairs(self) -> int:
        return self.n_states * self.n_actions

    @property
    def q_bar(self) -> float:
        """Upper bound (1 - gamma)^-1 on any value."""
        return 1.0 / (1.0 - self.gamma)

    @cached_property
    def transition_cdf(self) -> list:
        return _cumulative_rows(self.transition)


class Policy(BaseModel):
    """Row-stochastic table pi(a|s)."""
    model_config = ARRAY_CONFIG

    probs: FloatArray = Field(description="Action probabilities with shape (|S|, |A|)")

    @model_validator(mode="after")
    def _check_rows(self):
        p = self.probs
        if p.ndim != 2 or p.shape[0] == 0 or p.shape[1] == 0:
            raise ValueError(f"policy must be a nonempty 2-D table, got shape {p.shape}")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValueError("policy probabilities must be finite and nonnegative")
        worst = float(np.max(np.abs(p.sum(axis=1) - 1.0)))
        if worst > SIMPLEX_TOL:
            raise ValueError(f"policy rows must sum to 1 (worst deviation {worst:.3e})")
        return self

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "Policy":
        return cls(probs=np.full((n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def deterministic(cls, actions, n_actions: int) -> "Policy":
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros((actions.size, n_actions))
        probs[np.arange(actions.size), actions] = 1.0
        return cls(probs=probs)

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]

    @cached_property
    def cdf(self) -> list:
        return _cumulative_rows(self.probs)


class Regularizer(BaseModel):
    """Convex regularizer h on action distributions: none or tau * sum p log p."""
    model_config = ConfigDict(frozen=True)

    kind: Literal["none", "entropy"] = "none"
    tau: float = Field(default=0.0, ge=0.0, description="Entropy temperature")
    mu_h: float = Field(default=0.0, ge=0.0, description="Strong-convexity modulus")
    subgrad_bound: float = Field(default=0.0, ge=0.0, description="Bound M_h on subgradient norms")

    @model_validator(mode="after")
    def _check_kind(self):
        if self.kind == "none" and (self.tau or self.mu_h or self.subgrad_bound):
            raise ValueError("kind='none' requires tau = mu_h = subgrad_bound = 0")
        if self.kind == "entropy" and self.tau <= 0:
            raise ValueError("entropy regularizer needs tau > 0")
        return self

    @classmethod
    def none(cls) -> "Regularizer":
        return cls()

    @classmethod
    def entropy(cls, tau: float, n_actions: int) -> "Regularizer":
        return cls(kind="entropy", tau=tau, mu_h=tau, subgrad_bound=tau * math.log(max(n_actions, 1)))

    @property
    def is_none(self) -> bool:
        return self.kind == "none"

    def evaluate(self, p) -> np.ndarray | float:
        """h applied along the last axis of p."""
        p = np.asarray(p, dtype=float)
        if self.is_none:
            value = np.zeros(p.shape[:-1])
        else:
            clipped = np.clip(p, PROB_CLIP, None)
            value = self.tau * xlogy(clipped, clipped).sum(axis=-1)
        return float(value) if value.ndim == 0 else value


class MixingProfile(BaseModel):
    """Stationary law plus a geometric envelope sup_s ||P^t(s,.) - nu||_tv <= C rho^t."""
    model_config = ARRAY_CONFIG

    stationary: FloatArray
    C: float = Field(ge=0.0)
    rho: float = Field(ge=0.0, le=1.0)
    is_geometric: bool
    distances: FloatArray = Field(description="d(t) for t = 0..horizon")

    @model_validator(mode="after")
    def _check_stationary(self):
        if abs(float(self.stationary.sum()) - 1.0) > 1e-10:
            raise ValueError("stationary distribution must sum to 1")
        return self

    @property
    def nu_floor(self) -> float:
        return float(self.stationary.min())

    def normalized(self) -> "MixingProfile":
        """Same envelope with rho raised to at least 1/2."""
        return self.model_copy(update={"rho": max(self.rho, 0.5)})


class ImplicitMixingBounds(BaseModel):
    """Mixing guarantees inherited by policies that keep optimal actions above a floor."""
    model_config = ConfigDict(frozen=True)

    b_bar: int = Field(ge=1)
    rho_bound: float
    nu_floor: float


# ---------------------------------------------------------------------------
# Mirror descent
# ---------------------------------------------------------------------------

class DistanceGenerator(BaseModel):
    """Distance-generating function: KL (negative entropy) or negative Tsallis entropy."""
    model_config = ConfigDict(frozen=True)

    kind: Literal["kl", "tsallis"]
    p: Optional[float] = Field(default=None, description="Tsallis entropic index in (0, 1)")

    @model_validator(mode="after")
    def _check_index(self):
        if self.kind == "tsallis" and (self.p is None or not 0.0 < self.p < 1.0):
            raise ValueError(f"Tsallis index must lie strictly inside (0, 1), got {self.p}")
        if self.kind == "kl" and self.p is not None:
            raise ValueError("KL generator takes no entropic index")
        return self

    @classmethod
    def kl(cls) -> "DistanceGenerator":
        return cls(kind="kl")

    @classmethod
    def tsallis(cls, p: float) -> "DistanceGenerator":
        return cls(kind="tsallis", p=p)

    @classmethod
    def for_discount(cls, gamma: float) -> "DistanceGenerator":
        return cls.tsallis(tsallis_index(gamma))


def tsallis_index(gamma: float) -> float:
    """p = 1/log2((1-gamma)^-1) for gamma >= 3/4, else 1/2."""
    if gamma < 0.75:
        return 0.5
    return min(0.5, 1.0 / math.log2(1.0 / (1.0 - gamma)))


def horizon_log(gamma: float) -> float:
    """log2((1-gamma)^-1), floored at its value for gamma = 3/4."""
    return math.log2(1.0 / (1.0 - max(gamma, 0.75)))


class SpmdConfig(BaseModel):
    """Stepsize schedule and prox settings for stochastic policy mirror descent."""
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(gt=0.0)
    k: int = Field(ge=4, description="Iteration count")
    schedule: Literal["constant", "anytime"] = "constant"
    dgf: DistanceGenerator
    bisection_tol: float = Field(default=1e-12, gt=0.0)

    def eta(self, t: int) -> float:
        if self.schedule == "anytime":
            return self.alpha / math.sqrt(t + 1)
        return self.alpha / math.sqrt(self.k)


# ---------------------------------------------------------------------------
# Tabular auto-exploration
# ---------------------------------------------------------------------------

class TabularAutoConfig(BaseModel):
    """Target accuracy plus every parameter derived from it for the tabular driver."""
    model_config = ConfigDict(frozen=True)

    gamma: float = Field(ge=0.0, lt=1.0)
    n_states: int = Field(ge=1)
    n_actions: int = Field(ge=1)
    epsilon: float = Field(gt=0.0)
    delta: float = Field(gt=0.0, lt=1.0)
    subgrad_bound: float = Field(default=0.0, ge=0.0)
    p: float
    alpha: float
    k: int
    varsigma: float
    underline_pi: float
    anytime: bool = False

    @model_validator(mode="after")
    def _check_accuracy(self):
        if self.epsilon >= 1.0 / (1.0 - self.gamma):
            raise ValueError(f"epsilon={self.epsilon} must be below (1-gamma)^-1")
        return self


class ExplorationDifficulty(BaseModel):
    """Algorithm-independent exploration constant and the inputs it was built from."""
    model_config = ConfigDict(frozen=True)

    value: float = Field(gt=0.0)
    n_actions: int
    n_pairs: int
    delta: float
    gamma: float
    b_bar: int
    rho_star: float
    nu_floor_star: float


class HittingRecord(BaseModel):
    """First hitting times of every pair within a window of length m."""
    model_config = ARRAY_CONFIG

    window_length: int = Field(ge=0)
    tau: IntArray
    hit: BoolArray

    @model_validator(mode="after")
    def _check_caps(self):
        if np.any(self.tau > self.window_length) or np.any(self.tau < 0):
            raise ValueError("hitting times must lie in [0, m]")
        if not np.array_equal(self.tau < self.window_length, self.hit):
            raise ValueError("tau(z) < m must coincide with the hit flag")
        return self


class EstimateResult(BaseModel):
    """A Q estimate together with the transitions it consumed."""
    model_config = ARRAY_CONFIG

    q: FloatArray
    samples: int = Field(ge=0)
    diagnostics: Dict[str, float] = Field(default_factory=dict)


# ---------------------------------------------------------------------------
# Linear function approximation
# ---------------------------------------------------------------------------

class FeatureMap(BaseModel):
    """Full-column-rank feature table Phi over state-action pairs."""
    model_config = ARRAY_CONFIG

    phi: FloatArray = Field(description="Features with shape (|Z|, d)")
    omega: float = Field(default=0.0, description="Spectral norm of phi")
    sigma_min: float = Field(default=0.0, description="Smallest singular value of phi")

    @model_validator(mode="before")
    @classmethod
    def _spectrum(cls, data: Any):
        if isinstance(data, dict) and "phi" in data:
            phi = np.asarray(data["phi"], dtype=float)
            if phi.ndim == 2 and phi.size and np.all(np.isfinite(phi)):
                sv = svdvals(phi)
                data = {**data, "omega": float(sv.max()), "sigma_min": float(sv.min())}
        return data

    @model_validator(mode="after")
    def _check_rank(self):
        if self.phi.ndim != 2 or self.phi.size == 0:
            raise ValueError(f"phi must be a nonempty 2-D table, got shape {self.phi.shape}")
        if self.phi.shape[1] > self.phi.shape[0] or self.sigma_min <= 1e-10:
            raise ValueError(
                f"phi must have full column rank (shape {self.phi.shape}, "
                f"sigma_min={self.sigma_min:.3e})"
            )
        return self

    @property
    def n_pairs(self) -> int:
        return self.phi.shape[0]

    @property
    def dim(self) -> int:
        return self.phi.shape[1]


class WeightModel(BaseModel):
    """Weighting distribution w over pairs and the curvature it induces."""
    model_config = ARRAY_CONFIG

    w: FloatArray
    s_or: int = Field(ge=0)
    f: float = Field(ge=0.0, le=1.0)
    eps_action: float = Field(ge=0.0, le=1.0)
    mu: float = Field(gt=0.0, description="lambda_min(Phi^T W Phi)")

    @model_validator(mode="after")
    def _check_weights(self):
        if np.any(self.w <= 0):
            raise ValueError("weights must be strictly positive")
        if abs(float(self.w.sum()) - 1.0) > 1e-10:
            raise ValueError("weights must sum to 1")
        return self

    @property
    def w_min(self) -> float:
        return float(self.w.min())


class CtdConfig(BaseModel):
    """Settings of one conditional temporal-difference run."""
    model_config = ConfigDict(frozen=True)

    n_half: int = Field(ge=0, description="Half-run length N; CTD performs 2N updates")
    iota: float = Field(ge=0.0, description="Stepsize")
    m: int = Field(ge=0, description="Cap on the geometric mixing draw")
    s_or: int = Field(default=0, ge=0)
    f: float = Field(default=0.0, ge=0.0, le=1.0)
    eps_state: float = Field(default=0.0, ge=0.0, le=1.0)
    eps_action: float = Field(default=0.0, ge=0.0, le=1.0)
    replicates: int = Field(default=1, ge=1)

    def check_guarantees(
        self, gamma: float, omega: float, mu: float, n_states: int, check_stepsize: bool = True
    ) -> None:
        """Raise when the stepsize cap or the mixing floor needed for guarantees is violated."""
        cap = (1.0 - gamma) / (512.0 * omega ** 2)
        if check_stepsize and self.iota > cap * (1.0 + 1e-12):
            raise InvalidInputError(f"iota={self.iota} exceeds the cap {cap:.3e}")
        floor = mixing_floor(gamma, omega, mu, n_states)
        if self.m < floor:
            raise InvalidInputError(f"m={self.m} is below the floor {floor}")


def mixing_floor(gamma: float, omega: float, mu: float, n_states: int) -> int:
    """Smallest m with gamma^m <= mu / ((Omega^2 + 1) |S|^{1/2})."""
    if gamma == 0.0:
        return 1
    ratio = (omega ** 2 + 1.0) * math.sqrt(n_states) / mu
    return max(1, math.ceil(math.log(ratio) / math.log(1.0 / gamma)))


class DeskScale(BaseModel):
    """Multiplicative scale-down of the formula parameters plus absolute caps."""
    model_config = ConfigDict(frozen=True)

    k_factor: float = Field(default=1.0, gt=0.0)
    n_factor: float = Field(default=1.0, gt=0.0)
    m_factor: float = Field(default=1.0, gt=0.0)
    iota_factor: float = Field(default=1.0, gt=0.0)
    gap_factor: float = Field(default=1.0, gt=0.0)
    k_max: Optional[int] = Field(default=None, ge=0)
    n_max: Optional[int] = Field(default=None, ge=1)
    m_max: Optional[int] = Field(default=None, ge=1)
    replicates: Optional[int] = Field(default=None, ge=1)
    gap_replicates: Optional[int] = Field(default=None, ge=1)
    eps_state_floor: Optional[float] = Field(
        default=None, gt=0.0, le=1.0, description="Lower bound on the state-exploration strength"
    )

    def exploration(self, eps_state: float) -> float:
        if self.eps_state_floor is None:
            return eps_state
        return max(eps_state, self.eps_state_floor)


class SpmdCtdConfig(BaseModel):
    """Parameters of SPMD driven by robust CTD estimates."""
    model_config = ConfigDict(frozen=True)

    mode: Literal["theoretical", "desk"] = "theoretical"
    gamma: float = Field(ge=0.0, lt=1.0)
    n_states: int = Field(ge=1)
    n_actions: int = Field(ge=1)
    epsilon: float = Field(gt=0.0)
    delta: float = Field(gt=0.0, le=1.0)
    f: float = Field(ge=0.0, le=1.0)
    underline_kappa: float = Field(gt=0.0)
    omega: float = Field(gt=0.0)
    sigma_min: float = Field(gt=0.0)
    p: float
    alpha: float
    k: int = Field(ge=0)
    eta: float
    eps_state: float = Field(ge=0.0, le=1.0)
    eps_action: float = Field(ge=0.0, le=1.0)
    w_floor: float
    mu_floor: float
    T: int
    iota: float
    N: int
    m: int
    replicates: int = Field(ge=1)

    @model_validator(mode="after")
    def _check_accuracy(self):
        if self.epsilon >= 1.0 / (1.0 - self.gamma):
            raise ValueError(f"epsilon={self.epsilon} must be below (1-gamma)^-1")
        return self

    def ctd_config(self, s_or: int) -> CtdConfig:
        """
        CTD settings for one evaluation from origin s_or.

        The mixing floor is enforced in both modes; the stepsize cap only
        binds theoretical parameters since desk presets scale iota up.
        """
        ctd = CtdConfig(
            n_half=self.N,
            iota=self.iota,
            m=self.m,
            s_or=s_or,
            f=self.f,
            eps_state=self.eps_state,
            eps_action=self.eps_action,
            replicates=self.replicates,
        )
        ctd.check_guarantees(
            self.gamma, self.omega, self.mu_floor, self.n_states, check_stepsize=self.mode == "theoretical"
        )
        return ctd


# ---------------------------------------------------------------------------
# Certificate and doubling trick
# ---------------------------------------------------------------------------

class GapEstimate(BaseModel):
    """Monte-Carlo advantage-gap estimate per state."""
    model_config = ARRAY_CONFIG

    g: FloatArray
    M: int = Field(ge=1)
    varsigma: float = Field(ge=0.0)
    samples: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _check_finite(self):
        if not np.all(np.isfinite(self.g)):
            raise ValueError("gap estimates must be finite")
        return self

    @property
    def g_max(self) -> float:
        return float(self.g.max())


class KappaPreset(BaseModel):
    """Lower bound on visitation mass and the exploration switches that go with it."""
    model_config = ConfigDict(frozen=True)

    mode: Literal["with_frequency", "small_approx_error"]
    underline_kappa: float = Field(ge=0.0)
    f: float = Field(ge=0.0, le=1.0)
    zero_state_exploration: bool = False


class DoublingState(TypedDict):
    """LangGraph state of the doubling-trick driver."""
    epoch: Annotated[int, lambda a, b: b]
    kappa_tilde: Annotated[float, lambda a, b: b]
    max_epoch: Annotated[int, lambda a, b: b]
    iterations: Annotated[int, lambda a, b: b]
    certified: Annotated[bool, lambda a, b: b]
    policy: Annotated[Optional[Policy], lambda a, b: b]
    gap_estimate: Annotated[Optional[GapEstimate], lambda a, b: b]
    ctd_samples: Annotated[int, lambda a, b: b]
    total_samples: Annotated[int, lambda a, b: b]
    history: Annotated[List[dict], add]
    errors: Annotated[List[str], add]


# ---------------------------------------------------------------------------
# Experiment plumbing
# ---------------------------------------------------------------------------

class RunRecord(BaseModel):
    """Per-iteration metric rows plus a summary block."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    columns: List[str]
    rows: List[Dict[str, float]] = Field(default_factory=list)
    summary: Dict[str, Any] = Field(default_factory=dict)

    def append(self, **row: float) -> None:
        missing = [c for c in self.columns if c not in row]
        if missing:
            raise ValueError(f"row is missing columns {missing}")
        if self.rows:
            last = self.rows[-1]
            if "iter" in row and row["iter"] <= last["iter"]:
                raise ValueError("iteration index must increase")
            if "samples_cum" in row and row["samples_cum"] < last["samples_cum"]:
                raise ValueError("samples_cum must be non-decreasing")
        self.rows.append({c: row[c] for c in self.columns})

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def __len__(self) -> int:
        return len(self.rows)


class InstanceSpec(BaseModel):
    """Which MDP an experiment runs on."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    generator: Literal["garnet", "hard_chain", "file", "benchmark"] = "garnet"
    n_states: int = Field(default=5, ge=1)
    n_actions: int = Field(default=3, ge=1)
    branching: Optional[int] = Field(default=None, ge=1)
    slip: float = Field(default=0.1, gt=0.0, lt=1.0)
    gamma: float = Field(default=0.8, ge=0.0, lt=1.0)
    seed: int = Field(default=0, ge=0)
    path: Optional[str] = None
    name: Optional[str] = Field(default=None, description="Benchmark name in benchmarks.yaml")


class ExperimentConfig(BaseModel):
    """Fully serializable description of one CLI run."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    command: Literal["solve-exact", "tabular-auto", "ctd-eval", "spmd-ctd", "paramfree", "verify", "gen"]
    instance: InstanceSpec = Field(default_factory=InstanceSpec)
    seed: int = Field(default=0, ge=0)
    epsilon: Optional[float] = Field(default=None, gt=0.0)
    delta: float = Field(default=0.1, gt=0.0, lt=1.0)
    iterations: Optional[int] = Field(default=None, ge=1)
    anytime: bool = True
    f: float = Field(default=0.5, ge=0.0, le=1.0)
    underline_kappa: Optional[float] = Field(default=None, gt=0.0, le=1.0)
    kappa_mode: Literal["with_frequency", "small_approx_error"] = "with_frequency"
    features: Literal["identity", "one_hot_state", "gaussian"] = "identity"
    feature_dim: Optional[int] = Field(default=None, ge=1)
    ctd_n_half: int = Field(default=2000, ge=0)
    ctd_iota: float = Field(default=0.05, ge=0.0)
    ctd_m: int = Field(default=30, ge=0)
    ctd_replicates: int = Field(default=1, ge=1)
    desk: DeskScale = Field(default_factory=DeskScale)
    budget: Optional[int] = Field(default=None, ge=1)
    quick: bool = Field(default=False, description="Smaller property battery for verify")
    output_dir: str = "results"
    name: Optional[str] = None
    replicates: int = Field(default=1, ge=1)
