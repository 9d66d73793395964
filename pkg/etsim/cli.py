"""Command-line entry point: ``etsim run | list | validate``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Sequence

from .common_utils import load_local_env
from .hilbert_utils import HilbertSpaceError
from .lindblad_solver import IntegrationError, SteadyStateError
from .model_builders import ModelBuildError
from .protocol_handler import ScheduleError
from .scenario_handler import ConfigError, apply_overrides, dump_config, list_scenarios, load_config, resolve_config, run_scenario
from .state_utils import StateError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_QUALITY = 1
EXIT_CONFIG = 2
EXIT_INTEGRATOR = 3
EXIT_STRICT = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="etsim", description="Dissipative entanglement via electron transfer.")
    parser.add_argument("--verbose", action="store_true", help="Log at DEBUG level.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="Run a preset id or a scenario config file.")
    run_p.add_argument("target", help="Preset id (see 'list') or path to a .toml/.json config.")
    run_p.add_argument("--out", help="Output directory (default: $ETSIM_OUTPUT_DIR or ./etsim_output).")
    run_p.add_argument("--seed", type=int, help="Seed for synthetic coupling draws.")
    run_p.add_argument("--strict", action="store_true", help="Fail when a checkpoint misses its band.")
    run_p.add_argument("--json", action="store_true", help="Print the run report as JSON.")
    run_p.add_argument("--ncut", type=int, help="Override the boson cutoff n_c.")
    run_p.add_argument("--tol", type=float, help="Override the integrator rtol.")

    list_p = sub.add_parser("list", help="List the scenario presets.")
    list_p.add_argument("--json", action="store_true")

    val_p = sub.add_parser("validate", help="Validate a config file without running it.")
    val_p.add_argument("config")
    val_p.add_argument("--json", action="store_true", help="Print the normalized config.")
    return parser


def _cmd_list(args: argparse.Namespace) -> int:
    catalog = list_scenarios()
    if args.json:
        print(json.dumps(catalog, indent=2))
    else:
        for entry in catalog:
            print(f"{entry['id']:<6} {entry['anchor']:<20} {entry['description']}")
    return EXIT_OK


def _cmd_validate(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    if args.json:
        print(dump_config(cfg))
    else:
        print(f"{args.config}: valid {cfg.scenario} scenario")
        print(json.dumps(cfg.parameter_echo(), indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = apply_overrides(resolve_config(args.target), n_cutoff=args.ncut, rtol=args.tol, seed=args.seed)
    report = run_scenario(cfg, out_dir=args.out)
    if args.json:
        print(report.model_dump_json(indent=2))
    else:
        for cp in report.checkpoints:
            status = "PASS" if cp.passed else "MISS"
            print(f"{status} {cp.label}: {cp.value:.5g} (expected {cp.expected} +/- {cp.tolerance})")
        for path in report.outputs:
            print(f"wrote {path}")
    if not report.quality.passed:
        for msg in report.quality.messages:
            logger.error(f"Quality check failed: {msg}")
        return EXIT_QUALITY
    if args.strict and not report.checkpoints_passed:
        return EXIT_STRICT
    return EXIT_OK


COMMANDS = {"list": _cmd_list, "validate": _cmd_validate, "run": _cmd_run}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    load_local_env()
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ModelBuildError, ScheduleError, StateError, HilbertSpaceError, KeyError) as exc:
        logger.error(f"Configuration error: {exc}")
        return EXIT_CONFIG
    except (IntegrationError, SteadyStateError) as exc:
        logger.error(f"Integration failed: {exc}")
        return EXIT_INTEGRATOR


if __name__ == "__main__":
    sys.exit(main())
