"""
Command Line Interface for AlmostISS
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import load_config
from .core import COMMANDS, EXIT_ERROR, RunResult, interval_rows, run
from .models import AlmostIssError
from .sim import write_trajectory_csv
from .utils import configure_logging, ensure_dir, write_csv, write_json

COMMAND_HELP = {
    "validate": "Check gains, storage functions and the origin",
    "intervals": "Locate the small-gain intervals",
    "regions": "Build the nested sets A_k and B_k",
    "check-sgc": "Sample the small-gain margin inside each interval",
    "check-lyapunov": "Sample the ISS-Lyapunov inequalities",
    "check-dpi": "Check the density blocks on their grids",
    "simulate": "Regional convergence and Monte-Carlo almost-ISS",
    "report": "Run everything and write the full report",
    "curves": "Write the gain-graph CSV only",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="almostiss",
        description="AlmostISS - small-gain analysis of two interconnected nonlinear systems",
    )
    subparsers = parser.add_subparsers(dest="command", help="Available commands")
    for name in COMMANDS:
        sub = subparsers.add_parser(name, help=COMMAND_HELP[name])
        sub.add_argument("--config", required=True, help="Path to the JSON config")
        sub.add_argument("--out", help="Output directory (overrides output.directory)")
        sub.add_argument("--seed", type=int, help="Random seed (overrides sim.seed)")
        sub.add_argument("--format", choices=["json", "csv", "both"], help="Output formats (overrides output.format)")
        sub.add_argument("--debug", action="store_true", help="Log at DEBUG level")
    return parser


def write_outputs(result: RunResult, directory: str, fmt: str) -> Path:
    """Write report.json and the CSV plot data of one run."""
    out = ensure_dir(directory)
    report = result.report
    if fmt in ("json", "both"):
        write_json(out / "report.json", report.model_dump_json(indent=2))
    if fmt in ("csv", "both"):
        if result.curves:
            write_csv(out / "gain_curves.csv", ["r", "gamma21", "gamma12_inv", "sigma"], result.curves)
        if report.intervals is not None:
            write_csv(
                out / "intervals.csv",
                ["k", "lower", "upper", "lower_converged", "upper_converged"],
                interval_rows(report.intervals),
            )
        for level, traj in result.trajectories.items():
            write_trajectory_csv(traj, out / f"trajectory_{level:g}.csv")
    return out


def _error(e: Exception) -> None:
    payload = {"error": type(e).__name__, "message": str(e), "path": getattr(e, "path", None)}
    print(json.dumps(payload), file=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main CLI entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return 0

    configure_logging(debug=args.debug)
    try:
        config = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ValueError("--seed must be non-negative")
            config.sim.seed = args.seed
        if args.out:
            config.output.directory = args.out
        if args.format:
            config.output.format = args.format

        result = run(args.command, config, debug=args.debug)
        out = write_outputs(result, config.output.directory, config.output.format)
        print(f"{args.command}: exit {result.exit_code}, results in {out}")
        return result.exit_code
    except (AlmostIssError, ValueError, OSError) as e:
        _error(e)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
