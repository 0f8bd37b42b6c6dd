"""Command-line entry points for scenario-driven batch runs."""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ScenarioError, WealthKinError
from .harness import parse_scenario, run_scenario

log = logging.getLogger("wealthkin")

_SUBCOMMANDS = {
    "equilibrium": ["equilibrium"],
    "gci-check": ["gci"],
    "particles": ["particles"],
    "kinetic": ["kinetic"],
    "macro": ["macro"],
    "compare": ["compare"],
    "tail-fit": ["tail_fit"],
    "run": None,  # every scale the scenario lists
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wealthkin",
        description="Multiscale wealth-dynamics runs driven by a scenario file.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMANDS:
        cmd = sub.add_parser(name, help=f"run the {name} stage")
        cmd.add_argument("--scenario", required=True, help="path to the scenario YAML")
        cmd.add_argument("--out", required=True, help="output directory")
        cmd.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        cmd.add_argument(
            "--threads",
            type=int,
            default=1,
            help="worker pool size for scenario sweeps; results never depend on it",
        )
        cmd.add_argument("--log-level", default="INFO", help="logging level")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level.upper(), logging.INFO))
    try:
        scenario = parse_scenario(args.scenario)
    except ScenarioError as exc:
        for violation in exc.violations:
            log.error("scenario: %s", violation)
        return 1
    if args.seed is not None:
        scenario.seed = args.seed
        scenario.raw["seed"] = args.seed
    scales = _SUBCOMMANDS[args.command]
    try:
        manifest, ok = run_scenario(scenario, args.out, scales=scales)
    except ScenarioError as exc:
        for violation in exc.violations:
            log.error("scenario: %s", violation)
        return 1
    except WealthKinError as exc:
        log.error("run failed: %s", exc)
        return 2
    for warning in manifest["warnings"]:
        log.warning("%s", warning)
    for scale, err in manifest["errors"].items():
        log.error("%s failed: %s", scale, err)
    if not ok:
        return 2
    log.info("wrote %d outputs to %s", len(manifest["outputs"]), args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
