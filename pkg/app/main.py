# app/main.py
import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

from .config import settings, logger
from .errors import ConfigError, InsufficientStatisticsError
from . import data_module
from . import detection_sim
from . import scenario_engine

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_STATISTICS = 3


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Master seed; overrides the config's seed.")
    common.add_argument("--trials", type=int, default=None, help="Trials per sweep point; overrides n_trials.")
    common.add_argument("--out-dir", type=Path, default=None, help=f"Output directory (default under {settings.OUTPUT_DIR}).")
    common.add_argument("--threads", type=int, default=settings.DEFAULT_THREADS,
                        help="Worker threads for trial blocks; results do not depend on it.")
    return common


def create_cli_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = argparse.ArgumentParser(prog="rydberg-dlcz",
                                     description="DLCZ source + Rydberg EIT memory simulator and analysis toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="Simulate, analyze and (optionally) fit a scenario.")
    p.add_argument("config", type=Path, help="Scenario YAML file.")
    p.add_argument("--strict", action="store_true", help="Fail on the first estimate with insufficient statistics.")

    p = sub.add_parser("analyze", parents=[common], help="Estimate correlations from existing stream files.")
    p.add_argument("config", type=Path, help="Scenario YAML giving windows and measurement mode.")
    p.add_argument("streams", type=Path, nargs="+", help="stream CSV files (with .meta.json sidecars).")
    p.add_argument("--output", type=Path, default=None, help="Estimates CSV (default <out-dir>/estimates.csv).")
    p.add_argument("--strict", action="store_true")

    p = sub.add_parser("fit", parents=[common], help="Fit a model to data described by a fit-problem YAML.")
    p.add_argument("problem", type=Path, help="Fit problem YAML (model_id, initial_params, fixed, data).")
    p.add_argument("--data", type=Path, default=None, help="CSV with x,y,sigma_y[,exposure] replacing the YAML data.")
    p.add_argument("--profile", action="store_true", help="Also write profile-likelihood intervals.")

    p = sub.add_parser("reproduce", parents=[common], help="Run a figure preset.")
    p.add_argument("figure_id", nargs="?", help="Preset id, e.g. fig3b.")
    p.add_argument("--config", type=Path, default=None, help="Base scenario YAML replacing the preset default.")
    p.add_argument("--list", action="store_true", help="List presets and exit.")

    p = sub.add_parser("validate-config", parents=[common], help="Validate a scenario YAML without running it.")
    p.add_argument("config", type=Path)
    return parser


def _load_config(path: Path, args: argparse.Namespace):
    config = data_module.load_scenario_config(path)
    return scenario_engine.with_overrides(config, seed=args.seed, n_trials=args.trials)


def _check_threads(args: argparse.Namespace) -> None:
    if args.threads < 1:
        raise ConfigError("Invalid command line", [f"--threads: must be >= 1 (got {args.threads})"])


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _load_config(args.config, args)
    output = scenario_engine.run_scenario(config, out_dir=args.out_dir, threads=args.threads, strict=args.strict)
    print(output.out_dir / "manifest.json")
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    config = _load_config(args.config, args)
    out_dir = Path(args.out_dir or settings.OUTPUT_DIR / config.scenario_id)
    out_path = args.output or out_dir / "estimates.csv"
    scenario_engine.analyze_streams(config, args.streams, out_path, strict=args.strict)
    print(out_path)
    return EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    problem = data_module.load_fit_problem(args.problem, data_path=args.data)
    out_dir = Path(args.out_dir or args.problem.parent)
    result = scenario_engine.fit_file(problem, out_dir, profile=args.profile)
    if not result.converged:
        logger.warning(f"Fit '{problem.model_id}' did not converge: {result.message}")
    for name in result.free_params:
        print(f"{name} = {result.params[name]:.6g} +/- {result.uncertainties[name]:.3g}")
    print(f"chi2/dof = {result.chi_square:.4g}/{result.n_dof}")
    return EXIT_OK


def cmd_reproduce(args: argparse.Namespace) -> int:
    if args.list or not args.figure_id:
        for info in scenario_engine.available_presets():
            print(f"{info.id:6s}  {info.name}: {info.description}")
        return EXIT_OK if args.list else EXIT_CONFIG
    config = data_module.load_scenario_config(args.config) if args.config else None
    paths = scenario_engine.reproduce(args.figure_id, out_dir=args.out_dir, config=config, seed=args.seed,
                                      n_trials=args.trials, threads=args.threads)
    print(paths["table"])
    return EXIT_OK


def cmd_validate_config(args: argparse.Namespace) -> int:
    config = _load_config(args.config, args)
    detection_sim.validate_scenario(config)
    print(json.dumps({"scenario_id": config.scenario_id, "config_hash": detection_sim.scenario_hash(config),
                      "valid": True}))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "fit": cmd_fit,
    "reproduce": cmd_reproduce,
    "validate-config": cmd_validate_config,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Runs one sub-command and returns the process exit code."""
    args = create_cli_parser().parse_args(argv)
    try:
        _check_threads(args)
        return COMMANDS[args.command](args)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        print(str(e), file=sys.stderr)
        return EXIT_CONFIG
    except InsufficientStatisticsError as e:
        logger.error(f"Insufficient statistics: {e}", exc_info=True)
        return EXIT_STATISTICS
    except ValueError as e:
        # Unknown preset ids and rejected scenarios surface here
        logger.error(f"Invalid request: {e}", exc_info=True)
        print(str(e), file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:
        logger.error(f"Unexpected error in '{args.command}': {e}", exc_info=True)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
