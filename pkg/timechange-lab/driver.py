#!/usr/bin/env python3
"""
Time-change lab command line driver.

Loads a scenario, applies command line overrides and runs the requested checks.

:copyright: (c) 2026 Time-change lab contributors
:license: Mozilla Public License Version 2.0, see LICENSE for more details.
"""

import argparse
import logging
import sys
from typing import Any

from config import Scenario, load_scenario
from const import CheckName
from errors import ConfigError, InfeasibleScenarioError, LabError
from harness import run_scenario, simulate_to_csv
from pool import default_workers
from utils import normalize_check, setup_logger

_LOG = logging.getLogger("driver")

SIMULATE = "simulate"
RUN = "run"
COMMANDS = (
    "classify",
    SIMULATE,
    "check-fp",
    "check-martingale",
    "check-spacetime",
    "check-pathwise",
    "check-uniqueness",
    RUN,
)


def parse_tolerances(raw: str | None) -> dict[str, Any]:
    """Split `key=value[,key=value]` into a dict; values stay strings until the scenario casts them."""
    if not raw:
        return {}
    out: dict[str, Any] = {}
    for item in raw.split(","):
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"malformed tolerance override {item!r}", field="--tol")
        out[key.strip()] = value.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    """Command line interface with one subcommand per check."""
    parser = argparse.ArgumentParser(prog="timechange-lab", description="Time-changed Markov process lab")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="scenario JSON file")
        cmd.add_argument("--out", default="out", help="artifact directory (default: out)")
        cmd.add_argument("--seed", type=int, default=None, help="override monte_carlo.master_seed")
        cmd.add_argument("--workers", type=int, default=None, help="process count (default: TCLAB_WORKERS or 1)")
        cmd.add_argument("--tol", default=None, help="tolerance overrides key=value[,key=value]")
    return parser


def _scenario_for(args: argparse.Namespace) -> Scenario:
    scenario = load_scenario(args.config)
    checks = None
    if args.command not in (RUN, SIMULATE):
        checks = (CheckName(normalize_check(args.command)),)
    return scenario.with_overrides(seed=args.seed, tolerances=parse_tolerances(args.tol), checks=checks)


def main(argv: list[str] | None = None) -> int:
    """Run the driver; returns the process exit code."""
    logging.basicConfig(
        format="%(asctime)s.%(msecs)03d | %(levelname)-8s | %(name)-14s | %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )
    setup_logger()

    args = build_parser().parse_args(argv)
    _LOG.debug("Starting %s with %s", args.command, args.config)
    try:
        workers = default_workers() if args.workers is None else args.workers
        scenario = _scenario_for(args)
        if args.command == SIMULATE:
            artifacts = simulate_to_csv(scenario, args.out, workers)
            _LOG.info("Wrote %s to %s", ", ".join(artifacts.values()), args.out)
            return 0
        result = run_scenario(scenario, args.out, workers)
    except ConfigError as ex:
        _LOG.error("Invalid scenario: %s", ex)
        return 2
    except InfeasibleScenarioError as ex:
        _LOG.error("Scenario is infeasible: %s", ex)
        return 1
    except LabError as ex:
        _LOG.error("%s failed: %s", args.command, ex)
        return 1

    for name, check in result.checks.items():
        print(f"{name:<12} {check.verdict.value}" + (f"  ({check.reason})" if check.reason else ""))
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
