"""Command-line entry point for the auto-exploring policy mirror descent experiments."""
import argparse
import logging
import sys
from typing import Optional, Sequence

from config import RUN_CONFIG, setup_logging
from errors import InvalidInputError
from experiments import (
    EXIT_INPUT_ERROR,
    load_benchmarks,
    load_experiment_config,
    merge_overrides,
    run_command,
    validate_config,
)

logger = logging.getLogger(__name__)

COMMANDS = ["solve-exact", "tabular-auto", "ctd-eval", "spmd-ctd", "paramfree", "verify", "gen"]

# argparse dest -> ExperimentConfig field
TOP_LEVEL = {
    "seed": "seed",
    "epsilon": "epsilon",
    "delta": "delta",
    "iterations": "iterations",
    "f": "f",
    "underline_kappa": "underline_kappa",
    "kappa_mode": "kappa_mode",
    "features": "features",
    "feature_dim": "feature_dim",
    "ctd_n_half": "ctd_n_half",
    "ctd_iota": "ctd_iota",
    "ctd_m": "ctd_m",
    "ctd_replicates": "ctd_replicates",
    "budget": "budget",
    "output_dir": "output_dir",
    "name": "name",
    "replicates": "replicates",
}
INSTANCE = {
    "generator": "generator",
    "n_states": "n_states",
    "n_actions": "n_actions",
    "branching": "branching",
    "slip": "slip",
    "gamma": "gamma",
    "instance_seed": "seed",
    "path": "path",
    "benchmark": "name",
}
DESK = {
    "k_factor": "k_factor",
    "n_factor": "n_factor",
    "m_factor": "m_factor",
    "iota_factor": "iota_factor",
    "gap_factor": "gap_factor",
    "k_max": "k_max",
    "n_max": "n_max",
    "m_max": "m_max",
    "replicate_cap": "replicates",
    "gap_replicates": "gap_replicates",
    "eps_state_floor": "eps_state_floor",
}


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON or YAML experiment config; flags override its fields")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--output-dir")
    parser.add_argument("--name", help="Base name of the output files")
    parser.add_argument("--replicates", type=int, help="Run seeds seed..seed+R-1 on worker threads")
    parser.add_argument("--budget", type=int, help="Cap on environment transitions per stream")
    parser.add_argument("--verbose", "-v", action="store_true", help="Log at DEBUG level")

    instance = parser.add_argument_group("instance")
    instance.add_argument("--generator", choices=["garnet", "hard_chain", "file", "benchmark"])
    instance.add_argument("--n-states", type=int)
    instance.add_argument("--n-actions", type=int)
    instance.add_argument("--branching", type=int)
    instance.add_argument("--slip", type=float)
    instance.add_argument("--gamma", type=float)
    instance.add_argument("--instance-seed", type=int)
    instance.add_argument("--path", help="MDP JSON file (generator 'file')")
    instance.add_argument("--benchmark", help="Instance name in benchmarks.yaml (generator 'benchmark')")


def _add_algorithm(parser: argparse.ArgumentParser) -> None:
    algo = parser.add_argument_group("algorithm")
    algo.add_argument("--epsilon", type=float)
    algo.add_argument("--delta", type=float)
    algo.add_argument("--iterations", type=int)
    algo.add_argument("--fixed-k", dest="anytime", action="store_false", default=None,
                      help="Use the fixed-k schedule instead of the anytime one")
    algo.add_argument("--f", type=float, help="Uniform-origin frequency of CTD")
    algo.add_argument("--underline-kappa", type=float)
    algo.add_argument("--kappa-mode", choices=["with_frequency", "small_approx_error"])
    algo.add_argument("--features", choices=["identity", "one_hot_state", "gaussian"])
    algo.add_argument("--feature-dim", type=int)
    algo.add_argument("--ctd-n-half", type=int)
    algo.add_argument("--ctd-iota", type=float)
    algo.add_argument("--ctd-m", type=int)
    algo.add_argument("--ctd-replicates", type=int)

    desk = parser.add_argument_group("desk scale")
    desk.add_argument("--desk-preset", help="Named preset from benchmarks.yaml")
    desk.add_argument("--k-factor", type=float)
    desk.add_argument("--n-factor", type=float)
    desk.add_argument("--m-factor", type=float)
    desk.add_argument("--iota-factor", type=float)
    desk.add_argument("--gap-factor", type=float)
    desk.add_argument("--k-max", type=int)
    desk.add_argument("--n-max", type=int)
    desk.add_argument("--m-max", type=int)
    desk.add_argument("--replicate-cap", type=int)
    desk.add_argument("--gap-replicates", type=int)
    desk.add_argument("--eps-state-floor", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="autoexplore",
        description="Auto-exploring stochastic policy mirror descent on finite discounted MDPs.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        sub = subparsers.add_parser(command)
        _add_common(sub)
        if command == "verify":
            sub.add_argument("--quick", action="store_true", default=None, help="Smaller property battery")
        elif command not in ("solve-exact", "gen"):
            _add_algorithm(sub)
    return parser


def collect_overrides(args: argparse.Namespace) -> dict:
    """Translate the flags that were actually given into ExperimentConfig fields."""
    values = vars(args)
    overrides: dict = {"command": args.command}
    for dest, field in TOP_LEVEL.items():
        if values.get(dest) is not None:
            overrides[field] = values[dest]
    if values.get("anytime") is not None:
        overrides["anytime"] = values["anytime"]
    if values.get("quick") is not None:
        overrides["quick"] = values["quick"]

    instance = {field: values[dest] for dest, field in INSTANCE.items() if values.get(dest) is not None}
    if values.get("benchmark") is not None and "generator" not in instance:
        instance["generator"] = "benchmark"
    if instance:
        overrides["instance"] = instance

    desk: dict = {}
    if values.get("desk_preset"):
        presets = load_benchmarks().get("desk_presets", {})
        if values["desk_preset"] not in presets:
            raise InvalidInputError(f"Unknown desk preset: {values['desk_preset']}")
        desk.update(presets[values["desk_preset"]])
    desk.update({field: values[dest] for dest, field in DESK.items() if values.get(dest) is not None})
    if desk:
        overrides["desk"] = desk
    return overrides


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main execution function."""
    args = build_parser().parse_args(argv)
    if args.verbose:
        setup_logging("DEBUG")
    logger.info(f"Configuration: debug={RUN_CONFIG.debug}, seed_override={RUN_CONFIG.seed}, "
                f"sample_budget={RUN_CONFIG.sample_budget}")

    try:
        overrides = collect_overrides(args)
        if args.config:
            config = load_experiment_config(args.config, overrides)
        else:
            config = validate_config(merge_overrides({}, overrides), source="command line")
    except InvalidInputError as e:
        logger.error(f"Invalid configuration: {str(e)}")
        return EXIT_INPUT_ERROR

    try:
        return run_command(config)
    except Exception as e:
        logger.error(f"Workflow failed: {str(e)}")
        raise


if __name__ == "__main__":
    sys.exit(main())
