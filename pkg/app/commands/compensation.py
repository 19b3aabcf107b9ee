"""Compensation Command
====================
Fits compensation filters offline from a stored scene and prints the fit
residual of every (m, k) pair.

Usage:
- dmcanc train-compensation SCENE --length L_c --out OUT
"""

import argparse
from pathlib import Path

from rich.console import Console
from rich.table import Table

from app.services.compensation.compensation_service import CompensationSet
from app.utils import delegate
from app.utils.exceptions import EXIT_OK

console = Console()


def register(subparsers: argparse._SubParsersAction) -> None:  # type: ignore[type-arg]
    parser = subparsers.add_parser(
        "train-compensation", help="fit compensation filters for a scene"
    )
    parser.add_argument("scene", type=Path, help="scene archive (.npz)")
    parser.add_argument("--length", type=int, default=33, help="filter length L_c")
    parser.add_argument("--out", type=Path, required=True, help="output archive")
    parser.set_defaults(func=handle)


def handle(args: argparse.Namespace) -> int:
    comp, path = delegate.get_compensation_service().train(
        args.scene, args.length, args.out
    )
    console.print(residual_table(comp))
    console.print(f"compensation set written to {path}")
    return EXIT_OK


def residual_table(comp: CompensationSet) -> Table:
    table = Table(title=f"compensation fit, L_c = {comp.length}")
    table.add_column("m")
    table.add_column("k")
    table.add_column("residual", justify="right")
    for (m, k), residual in sorted(comp.residuals.items()):
        table.add_row(str(m + 1), str(k + 1), f"{residual:.3e}")
    return table
