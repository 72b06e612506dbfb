"""Experiment orchestration: instances, command dispatch, output files and replicate fan-out."""
import csv
import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml
from pydantic import ValidationError

from config import BENCHMARKS_PATH, MAX_STATE_ACTION_PAIRS, RUN_CONFIG
from drivers import tabular
from drivers.paramfree import kappa_presets, paramfree_run
from drivers.spmd_ctd import desk_params, last_iterate_gap_bound, spmd_ctd_run, synth_params
from errors import AutoExploreError, BudgetExceeded, InvalidInputError
from linear_fa.ctd import ctd_solve, robust_min_norm
from linear_fa.features import build_features
from linear_fa.operator import (
    build_weights,
    ctd_bias_bound,
    epoch_length,
    solve_projected_bellman,
    weighted_norm,
)
from mdp.generators import gen_garnet, gen_hard_chain
from mdp.mixing import mixing_profile
from mdp.oracles import exact_q, mixed_visitation, solve_optimal
from mdp.serialization import dump_mdp, load_mdp
from models import CtdConfig, ExperimentConfig, InstanceSpec, Policy, RunRecord, TabularMdp
from samplers.stream import SampleStream
from verification import run_battery

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_BUDGET = 2


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def load_experiment_config(path: str | Path, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Parse a JSON (or YAML) config file, apply CLI overrides and validate."""
    try:
        with open(path, "r") as f:
            doc = yaml.safe_load(f) or {}
    except OSError as e:
        raise InvalidInputError(f"{path}: {e.strerror}") from e
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = f"line {mark.line + 1}: " if mark is not None else ""
        raise InvalidInputError(f"{path}: {line}{getattr(e, 'problem', e)}") from e
    if not isinstance(doc, dict):
        raise InvalidInputError(f"{path}: top level must be a mapping")
    return validate_config(merge_overrides(doc, overrides or {}), source=str(path))


def merge_overrides(doc: dict, overrides: dict) -> dict:
    """Overrides win; nested mappings (instance, desk) merge one level deep."""
    merged = dict(doc)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = {**merged[key], **value}
        else:
            merged[key] = value
    return merged


def validate_config(doc: dict, source: str = "config") -> ExperimentConfig:
    try:
        return ExperimentConfig(**doc)
    except ValidationError as e:
        fields = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()
        )
        raise InvalidInputError(f"{source}: {fields}") from e


def config_hash(config: ExperimentConfig) -> str:
    """First 16 hex digits of the SHA-256 of the canonical JSON form, output directory excluded."""
    doc = config.model_dump(mode="json", exclude={"output_dir"})
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def effective_seed(config: ExperimentConfig) -> int:
    return RUN_CONFIG.seed if RUN_CONFIG.seed is not None else config.seed


def load_benchmarks(path: str | Path = BENCHMARKS_PATH) -> dict:
    """Named instances and desk presets from benchmarks.yaml."""
    config_path = Path(path)
    if not config_path.is_absolute() and not config_path.exists():
        config_path = Path(__file__).parent / config_path
    with open(config_path, "r") as f:
        return yaml.safe_load(f) or {}


def build_instance(spec: InstanceSpec) -> TabularMdp:
    if spec.generator == "benchmark":
        if not spec.name:
            raise InvalidInputError("instance.name is required for generator 'benchmark'")
        instances = load_benchmarks().get("instances", {})
        if spec.name not in instances:
            raise InvalidInputError(f"Unknown benchmark instance: {spec.name}")
        return build_instance(InstanceSpec(**instances[spec.name]))
    if spec.generator == "file":
        if not spec.path:
            raise InvalidInputError("instance.path is required for generator 'file'")
        mdp = load_mdp(spec.path)
    elif spec.generator == "hard_chain":
        mdp = gen_hard_chain(spec.n_states, spec.slip, gamma=spec.gamma)
    else:
        branching = spec.branching if spec.branching is not None else spec.n_states
        mdp = gen_garnet(spec.n_states, spec.n_actions, branching, spec.seed, gamma=spec.gamma)
    if mdp.n_pairs > MAX_STATE_ACTION_PAIRS:
        raise InvalidInputError(f"|S||A| = {mdp.n_pairs} exceeds the cap {MAX_STATE_ACTION_PAIRS}")
    return mdp


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------

def _json_safe(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.ndarray):
        return _json_safe(value.tolist())
    if isinstance(value, (np.floating, float)):
        return float(value) if math.isfinite(value) else None
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def write_record(record: RunRecord, path: Path, digest: str, seed: int) -> None:
    """CSV time series whose first line carries the config hash and seed."""
    with open(path, "w", newline="") as f:
        f.write(f"# config_hash={digest} seed={seed}\n")
        writer = csv.DictWriter(f, fieldnames=record.columns, lineterminator="\n")
        writer.writeheader()
        for row in record.rows:
            writer.writerow({k: repr(float(v)) for k, v in row.items()})
    logger.info(f"[WRITE] {len(record)} rows -> {path}")


def write_summary(summary: dict, path: Path, digest: str, seed: int) -> None:
    doc = _json_safe({**summary, "config_hash": digest, "seed": seed})
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    logger.info(f"[WRITE] summary -> {path}")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _stream(mdp: TabularMdp, config: ExperimentConfig, seed: int) -> SampleStream:
    return SampleStream(mdp, seed=seed, budget=config.budget)


def _features(mdp: TabularMdp, config: ExperimentConfig, seed: int):
    return build_features(config.features, mdp.n_states, mdp.n_actions, config.feature_dim, seed)


def _epsilon(config: ExperimentConfig, gamma: float) -> float:
    if config.epsilon is not None:
        return config.epsilon
    return 0.5 / (1.0 - gamma)


def run_solve_exact(mdp: TabularMdp, config: ExperimentConfig, seed: int) -> tuple[Optional[RunRecord], dict]:
    pi_star, v_star = solve_optimal(mdp)
    summary: dict = {
        "v_star": v_star,
        "pi_star": np.argmax(pi_star.probs, axis=1),
    }
    try:
        profile = mixing_profile(mdp, pi_star)
        summary["mixing"] = {
            "C": profile.C,
            "rho": profile.rho,
            "is_geometric": profile.is_geometric,
            "nu_floor": profile.nu_floor,
            "stationary": profile.stationary,
        }
    except AutoExploreError as e:
        logger.warning(f"No mixing profile for the optimal policy: {str(e)}")
        summary["mixing"] = None
    return None, summary


def run_tabular_auto(mdp: TabularMdp, config: ExperimentConfig, seed: int) -> tuple[Optional[RunRecord], dict]:
    if config.iterations is not None and config.anytime:
        params = tabular.anytime_config(mdp.gamma, mdp.n_actions, mdp.n_states, config.iterations, config.delta)
    elif config.iterations is not None:
        epsilon = tabular.epsilon_for_iterations(mdp.gamma, mdp.n_actions, config.iterations)
        params = tabular.theorem_params(mdp.gamma, mdp.n_actions, mdp.n_states, epsilon, config.delta)
    else:
        params = tabular.theorem_params(
            mdp.gamma, mdp.n_actions, mdp.n_states, _epsilon(config, mdp.gamma), config.delta
        )
    stream = _stream(mdp, config, seed)
    _, record = tabular.run(stream, params, budget=config.budget, oracle=mdp)
    summary = dict(record.summary)
    summary.update(k=params.k, p=params.p, alpha=params.alpha, anytime=params.anytime)
    return record, summary


def run_ctd_eval(mdp: TabularMdp, config: ExperimentConfig, seed: int) -> tuple[Optional[RunRecord], dict]:
    """Evaluate the uniform policy with CTD replicates and compare against both oracles."""
    pi = Policy.uniform(mdp.n_states, mdp.n_actions)
    fmap = _features(mdp, config, seed)
    kappa = mixed_visitation(mdp, pi, 0, config.f)
    eps_action = (1.0 - mdp.gamma) * float(kappa.min()) / 4.0
    wm = build_weights(mdp, pi, fmap, 0, config.f, eps_action)
    _, q_bar = solve_projected_bellman(mdp, pi, fmap, wm)
    q_pi = exact_q(mdp, pi)

    ctd = CtdConfig(
        n_half=config.ctd_n_half,
        iota=config.ctd_iota,
        m=config.ctd_m,
        s_or=0,
        f=config.f,
        eps_action=eps_action,
        replicates=config.ctd_replicates,
    )
    stream = _stream(mdp, config, seed)
    record = RunRecord(columns=["iter", "samples_cum", "sup_norm", "err_w_proj", "err_inf_true"])
    candidates = []
    for j in range(ctd.replicates):
        result = ctd_solve(stream, pi, fmap, ctd)
        candidates.append(result.q)
        record.append(
            iter=j,
            samples_cum=stream.counter,
            sup_norm=float(np.abs(result.q).max()),
            err_w_proj=weighted_norm((result.q - q_bar).reshape(-1), wm.w),
            err_inf_true=float(np.abs(result.q - q_pi).max()),
        )
    q_hat = robust_min_norm(candidates)
    summary = {
        "err_w_proj": weighted_norm((q_hat - q_bar).reshape(-1), wm.w),
        "err_inf_true": float(np.abs(q_hat - q_pi).max()),
        "fixed_point_norm_w": weighted_norm(q_bar.reshape(-1), wm.w),
        "fixed_point_bound": 4.0 / (1.0 - mdp.gamma),
        "mu": wm.mu,
        "T": epoch_length(mdp.gamma, ctd.iota, wm.mu) if ctd.iota > 0 else None,
        "bias_bound": ctd_bias_bound(
            ctd.n_half, ctd.iota, ctd.m, mdp.gamma, mdp.n_states, fmap.omega, wm.mu
        ),
        "total_samples": stream.counter,
    }
    return record, summary


def _kappa_preset(mdp: TabularMdp, config: ExperimentConfig):
    if config.kappa_mode == "with_frequency":
        preset = kappa_presets(config.kappa_mode, mdp.gamma, mdp.n_states, f=config.f)
        if config.underline_kappa is not None:
            preset = preset.model_copy(update={"underline_kappa": config.underline_kappa})
        return preset
    return kappa_presets(config.kappa_mode, mdp.gamma, mdp.n_states, underline_kappa=config.underline_kappa)


def run_spmd_ctd(mdp: TabularMdp, config: ExperimentConfig, seed: int) -> tuple[Optional[RunRecord], dict]:
    fmap = _features(mdp, config, seed)
    preset = _kappa_preset(mdp, config)
    params = synth_params(
        mdp.gamma, fmap, mdp.n_actions, mdp.n_states,
        _epsilon(config, mdp.gamma), config.delta, preset.underline_kappa, preset.f,
    )
    if preset.zero_state_exploration:
        params = params.model_copy(update={"eps_state": 0.0})
    params = desk_params(params, config.desk)
    stream = _stream(mdp, config, seed)
    _, record = spmd_ctd_run(stream, fmap, params, oracle=mdp)
    summary = dict(record.summary)
    summary.update(
        k=params.k,
        N=params.N,
        m=params.m,
        T=params.T,
        replicates=params.replicates,
        underline_kappa=params.underline_kappa,
        last_iterate_gap_bound=last_iterate_gap_bound(params),
    )
    return record, summary


def run_paramfree(mdp: TabularMdp, config: ExperimentConfig, seed: int) -> tuple[Optional[RunRecord], dict]:
    fmap = _features(mdp, config, seed)
    preset = _kappa_preset(mdp, config)
    stream = _stream(mdp, config, seed)
    _, record = paramfree_run(
        stream,
        fmap,
        _epsilon(config, mdp.gamma),
        config.delta,
        preset.f,
        preset.underline_kappa,
        scale=config.desk,
        oracle=mdp,
        zero_state_exploration=preset.zero_state_exploration,
    )
    return record, dict(record.summary)


COMMANDS = {
    "solve-exact": run_solve_exact,
    "tabular-auto": run_tabular_auto,
    "ctd-eval": run_ctd_eval,
    "spmd-ctd": run_spmd_ctd,
    "paramfree": run_paramfree,
}


def _output_name(config: ExperimentConfig, replicate: Optional[int]) -> str:
    name = config.name or config.command
    return name if replicate is None else f"{name}_r{replicate}"


def run_single(config: ExperimentConfig, seed: int, replicate: Optional[int] = None) -> int:
    """Run one seeded replicate and write its files; returns the exit code."""
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    name = _output_name(config, replicate)
    digest = config_hash(config)

    if config.command == "verify":
        results = run_battery(seed=seed, quick=config.quick)
        summary = {"passed": all(r.passed for r in results), "checks": [r.model_dump() for r in results]}
        write_summary(summary, out_dir / f"{name}.json", digest, seed)
        return EXIT_OK if summary["passed"] else EXIT_INPUT_ERROR

    mdp = build_instance(config.instance)
    if config.command == "gen":
        dump_mdp(mdp, out_dir / f"{name}.json")
        return EXIT_OK

    record, summary = COMMANDS[config.command](mdp, config, seed)
    if record is not None:
        write_record(record, out_dir / f"{name}.csv", digest, seed)
    write_summary(summary, out_dir / f"{name}.json", digest, seed)
    return EXIT_OK


def _guarded(config: ExperimentConfig, seed: int, replicate: Optional[int]) -> int:
    try:
        return run_single(config, seed, replicate)
    except BudgetExceeded as e:
        logger.error(f"[BUDGET] {str(e)}")
        return EXIT_BUDGET
    except (InvalidInputError, ValidationError, AutoExploreError) as e:
        logger.error(f"{config.command} failed: {str(e)}")
        return EXIT_INPUT_ERROR


def run_command(config: ExperimentConfig) -> int:
    """
    Execute the configured command, fanning replicates out over worker threads.

    Replicate i runs with seed + i and writes files suffixed `_r<i>`. The
    exit code is the worst replicate's: 0 success, 1 input error, 2 budget.

    Args:
        config: Validated experiment configuration

    Returns:
        Process exit code
    """
    seed = effective_seed(config)
    logger.info(f"Running {config.command} (seed={seed}, replicates={config.replicates})")
    if config.replicates == 1:
        return _guarded(config, seed, None)

    with ThreadPoolExecutor(max_workers=min(config.replicates, 8)) as pool:
        futures = [pool.submit(_guarded, config, seed + i, i) for i in range(config.replicates)]
        codes = [future.result() for future in futures]
    return max(codes)
