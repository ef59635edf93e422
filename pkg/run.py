#!/usr/bin/env python3
"""
D2D Trajectory Planner - command line simulator

Runs the offline, MPC and online planners on a scenario file or preset and
writes per-slot CSVs, a JSON summary and plot data to the output directory.

    python run.py compare --preset fig4 --out output/fig4
    python run.py sweep-delta --scenario my.env --delays 0,1,2,4
    python run.py verify-bounds --trials 200 --seed 7

Exit status: 0 success (bound violations are reported in the summary),
2 validation error, 3 infeasible (the failing slot is printed on stderr).
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from exceptions import Infeasible, PlannerError
from offline_solver import SolverSettings
from reports import emit_plotdata, write_report
from scenario_io import parse_scenario, resolve_preset
from settings import settings
from simulator import COMMANDS, TrajectorySimulator, bounds_report

logger = logging.getLogger("d2d")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3


def _delays(text: str) -> List[int]:
    try:
        delays = [int(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not delays or any(d < 0 for d in delays):
        raise argparse.ArgumentTypeError("delays must be non-negative integers")
    return delays


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="d2d-planner",
        description="Trajectory planning for a mobile user on a device-to-device link",
    )
    parser.add_argument("command", nargs="?", choices=COMMANDS,
                        help="what to run (defaults to the scenario's algorithm key)")
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--scenario", type=Path, help="scenario file (KEY = value lines)")
    source.add_argument("--preset", help="bundled scenario: fig1, fig3, fig4, fig5 or fig5_literal")
    parser.add_argument("--seed", type=_seed, help="override the scenario seed")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--delays", type=_delays, help="excess delays for sweep-delta, e.g. 0,1,3,5")
    parser.add_argument("--trials", type=int, help="Monte Carlo trials for verify-bounds")
    parser.add_argument("--figures", action="store_true", help="also render HTML figures")
    return parser


def _load(args):
    if args.preset:
        return parse_scenario(resolve_preset(args.preset))
    if args.scenario:
        return parse_scenario(args.scenario)
    return None


def execute(args) -> int:
    scenario_file = _load(args)
    command = args.command or (scenario_file.algorithm if scenario_file else None)
    if command is None:
        print("❌ Give a command, or a --scenario/--preset whose file names its algorithm",
              file=sys.stderr)
        return EXIT_VALIDATION
    if scenario_file is None and command != 'verify-bounds':
        print(f"❌ {command} needs --scenario or --preset", file=sys.stderr)
        return EXIT_VALIDATION
    if args.trials is not None and args.trials < 1:
        print("❌ --trials must be at least 1", file=sys.stderr)
        return EXIT_VALIDATION

    opts = SolverSettings()
    if scenario_file is None:
        report = bounds_report(args.seed or 0, args.trials, opts)
        out = args.out or settings.OUTPUT_DIR
    else:
        if args.seed is not None:
            scenario_file = scenario_file.with_seed(args.seed)
        out = args.out or scenario_file.output_dir
        print(f"🚀 {command} on {scenario_file.name}")
        sim = TrajectorySimulator(scenario_file, opts)
        report = sim.run(command, delays=args.delays, trials=args.trials)

    write_report(report, out)
    emit_plotdata(report, out)
    if args.figures:
        from charts import write_figures
        write_figures(report, out)

    for note in report.notes:
        print(f"⚠️  {note}")
    if report.regret is not None and not report.regret.bound_satisfied:
        print("⚠️  regret report exceeds its bound")
    if report.bounds_failed:
        print(f"⚠️  {report.bounds_failed} trial(s) violated a bound, see summary.json")
    print(f"✅ Results written to {out}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(
        level=settings.LOG_LEVEL,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
    )
    args = build_parser().parse_args(argv)
    try:
        return execute(args)
    except Infeasible as e:
        print(f"❌ infeasible at slot {e.slot}: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (PlannerError, ValueError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except KeyboardInterrupt:
        print("\n🛑 Stopped by user", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
