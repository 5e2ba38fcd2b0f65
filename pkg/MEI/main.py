"""
Command-line entry point.

    python -m MEI.main validate data/qinghai.mei
    python -m MEI.main plan data/qinghai.mei --out out/plan
    python -m MEI.main dispatch data/qinghai.mei --hours 24 --out out/run [--islanded] [--stackelberg]
    python -m MEI.main control data/qinghai.mei --gamma 5

Exit codes: 0 on success, 1 on validation errors, 2 on infeasible problems.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from MEI import (
    core_model,
    database,
    exception_handlers,
    logging_setup,
    reports,
    runner,
    scenario_io,
)

logger = logging.getLogger("mei")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mei", description="Smart micro energy internet toolkit")
    parser.add_argument("--verbose", action="store_true", help="log at DEBUG level")
    commands = parser.add_subparsers(dest="command", required=True)

    validate = commands.add_parser("validate", help="parse a scenario and check the design principles")
    validate.add_argument("file", type=Path)

    plan = commands.add_parser("plan", help="plan the hub portfolio of a scenario catalog")
    plan.add_argument("file", type=Path)
    plan.add_argument("--out", type=Path, default=None, help="directory for front.csv")

    dispatch = commands.add_parser("dispatch", help="run the energy management layers")
    dispatch.add_argument("files", type=Path, nargs="+")
    dispatch.add_argument("--hours", type=int, required=True, help="number of steps")
    dispatch.add_argument("--islanded", action="store_true", help="open the coupling point")
    dispatch.add_argument("--stackelberg", action="store_true", help="leader-follower dispatch")
    dispatch.add_argument("--out", type=Path, required=True)
    dispatch.add_argument("--archive", action="store_true", help="store the run totals in the archive")

    control = commands.add_parser("control", help="synthesize H-infinity component control laws")
    control.add_argument("file", type=Path)
    control.add_argument("--gamma", type=float, required=True)
    return parser


def _validate(args: argparse.Namespace) -> None:
    scenario = scenario_io.load_scenario(args.file)
    compliance = core_model.check_design_principles(scenario)
    topology = scenario.topology
    print(
        f"{scenario.name}: {len(topology.nodes)} nodes, {len(topology.links)} links, "
        f"{len(topology.hubs)} hubs, {len(scenario.devices)} devices, {scenario.horizon} steps"
    )
    for check in compliance.checks:
        print(f"  {check.name}: {'satisfied' if check.satisfied else 'violated'}")


def _plan(args: argparse.Namespace) -> None:
    scenario = scenario_io.load_scenario(args.file)
    plan = runner.run_planning(scenario, args.out)
    print(f"selection: {', '.join(plan.selection) or 'nothing'}")
    print(f"cost: {reports.format_number(plan.bargain.f1)}, emission: {reports.format_number(plan.bargain.f2)}")


def _dispatch(args: argparse.Namespace) -> None:
    for path in args.files:
        scenario = scenario_io.load_scenario(path)
        report = runner.run_dispatch(scenario, args.hours, islanded=args.islanded, stackelberg=args.stackelberg)
        directory = args.out / path.stem if len(args.files) > 1 else args.out
        reports.emit_report(report, directory)
        reports.emit_plotdata(report, directory / reports.PLOTDATA_FILE)
        if args.archive:
            database.archive_report(report)
        print(f"{scenario.name}: cost {reports.format_number(report.cost)}, report in {directory}")


def _control(args: argparse.Namespace) -> None:
    scenario = scenario_io.load_scenario(args.file)
    result = runner.run_control(scenario, args.gamma)
    for (model_id, law), (_, passed, worst) in zip(result.laws, result.dissipation):
        gain = np.array2string(law.K, precision=6, separator=", ")
        print(f"{model_id}: K = {gain}, dissipation {'passed' if passed else 'failed'} (worst {worst:.3e})")


COMMANDS = {"validate": _validate, "plan": _plan, "dispatch": _dispatch, "control": _control}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging_setup.setup_logging()
    if args.verbose:
        logging_setup.adjust_log_level("DEBUG")
    try:
        COMMANDS[args.command](args)
    except Exception as exc:
        code = exception_handlers.handle_exception(exc)
        print(f"error: {exc}", file=sys.stderr)
        return code
    return exception_handlers.EXIT_SUCCESS


if __name__ == "__main__":
    sys.exit(main())
