"""Run Command
===========
Runs a scenario file: every campaign entry on one shared scene and noise
seed, writing run-log, event, spectrum and weight artifacts per entry and a
campaign summary.

Usage:
- dmcanc run SCENARIO [--override key=value ...] [--seed N] [--duration S]
  [--K N] [--out-dir DIR] [--jobs N]
"""

import argparse
from pathlib import Path

from rich.console import Console
from rich.table import Table

from app.services.simulation.simulation_service import RunSummary
from app.utils import delegate
from app.utils.config import settings
from app.utils.exceptions import EXIT_OK

console = Console()


def register(subparsers: argparse._SubParsersAction) -> None:  # type: ignore[type-arg]
    parser = subparsers.add_parser("run", help="run a scenario or campaign")
    parser.add_argument("scenario", type=Path, help="scenario YAML file")
    parser.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="set a scenario key before validation (repeatable)",
    )
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--duration", type=float, help="simulated seconds")
    parser.add_argument("--K", dest="nodes", type=int, help="number of nodes")
    parser.add_argument("--out-dir", type=Path, help="artifact directory")
    parser.add_argument(
        "--jobs", type=int, default=None, help="parallel campaign entries"
    )
    parser.set_defaults(func=handle)


def shorthand_overrides(args: argparse.Namespace) -> list[str]:
    overrides = []
    if args.seed is not None:
        overrides.append(f"base.seed={args.seed}")
    if args.duration is not None:
        overrides.append(f"base.duration={args.duration}")
    if args.nodes is not None:
        overrides.append(f"base.nodes={args.nodes}")
    return overrides


def handle(args: argparse.Namespace) -> int:
    repository = delegate.get_simulation_repository()
    scenario = repository.load_scenario(
        args.scenario, [*args.override, *shorthand_overrides(args)]
    )
    out_dir = args.out_dir or scenario.base.output.directory or settings.OUTPUT_DIR
    jobs = args.jobs or settings.MAX_JOBS

    summaries = delegate.get_simulation_service().run_campaign(scenario, out_dir, jobs)
    console.print(summary_table(scenario.name, summaries))
    return EXIT_OK


def summary_table(title: str, summaries: list[RunSummary]) -> Table:
    table = Table(title=title)
    table.add_column("entry")
    table.add_column("algorithm")
    table.add_column("final ANSE (dB)", justify="right")
    table.add_column("events", justify="right")
    table.add_column("events/sample", justify="right")
    table.add_column("log")
    for s in summaries:
        table.add_row(
            s.name,
            s.algorithm.value,
            f"{s.final_anse:.2f}",
            str(s.comm_count),
            f"{s.comm_ratio:.2e}",
            str(s.artifacts.log),
        )
    return table
