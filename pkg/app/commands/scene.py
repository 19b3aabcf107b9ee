"""Scene Command
=============
Synthesizes an acoustic scene archive and prints its coupling summary.

Usage:
- dmcanc make-scene OUT --K N [--factorable --compensation-length L_c]
  [--length L_s] [--delay-min D] [--delay-max D] [--decay TAU]
  [--cross-attenuation RHO] [--seed N] [--fs HZ] [--mismatch-db DB]
"""

import argparse
from pathlib import Path

import numpy as np
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from app.services.scene.scene_service import (
    AcousticScene,
    factorable_scene,
    perturb_estimates,
    synthesize_scene,
)
from app.utils import delegate
from app.utils.exceptions import EXIT_OK, configuration_error_from
from app.utils.models import PathSynthesisSpec

console = Console()

_SPEC_FLAGS = (
    "length",
    "delay_min",
    "delay_max",
    "decay",
    "cross_attenuation",
    "primary_length",
    "primary_delay_min",
    "primary_delay_max",
)


def register(subparsers: argparse._SubParsersAction) -> None:  # type: ignore[type-arg]
    parser = subparsers.add_parser("make-scene", help="synthesize a scene archive")
    parser.add_argument("out", type=Path, help="output archive (.npz)")
    parser.add_argument("--K", dest="nodes", type=int, required=True)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--fs", type=float, default=16000.0)
    parser.add_argument("--factorable", action="store_true")
    parser.add_argument("--compensation-length", type=int, default=33)
    parser.add_argument("--self-length", type=int)
    parser.add_argument("--mismatch-db", type=float)
    parser.add_argument("--description", default="")
    parser.add_argument("--length", type=int)
    parser.add_argument("--delay-min", type=int)
    parser.add_argument("--delay-max", type=int)
    parser.add_argument("--decay", type=float)
    parser.add_argument("--cross-attenuation", type=float)
    parser.add_argument("--primary-length", type=int)
    parser.add_argument("--primary-delay-min", type=int)
    parser.add_argument("--primary-delay-max", type=int)
    parser.set_defaults(func=handle)


def handle(args: argparse.Namespace) -> int:
    values = {
        flag: getattr(args, flag) for flag in _SPEC_FLAGS if getattr(args, flag) is not None
    }
    try:
        spec = PathSynthesisSpec(seed=args.seed, **values)
    except ValidationError as e:
        raise configuration_error_from(e)

    if args.factorable:
        scene = factorable_scene(
            spec,
            args.nodes,
            args.compensation_length,
            fs=args.fs,
            self_length=args.self_length,
        ).scene
    else:
        scene = synthesize_scene(spec, args.nodes, fs=args.fs)
    if args.mismatch_db is not None:
        scene = perturb_estimates(scene, args.mismatch_db, args.seed + 2)

    path = delegate.get_scene_repository().save(args.out, scene, args.description)
    console.print(coupling_table(scene))
    console.print(f"scene written to {path}")
    return EXIT_OK


def coupling_table(scene: AcousticScene) -> Table:
    """Self versus combined cross path norms per secondary source."""
    norms = np.linalg.norm(scene.secondary_true, axis=2)
    table = Table(title=f"coupling of {scene.nodes}-node scene")
    table.add_column("source")
    table.add_column("‖s_kk‖", justify="right")
    table.add_column("‖cross‖", justify="right")
    table.add_column("ratio", justify="right")
    for k in range(scene.nodes):
        own = norms[k, k]
        cross = float(np.sqrt(np.sum(norms[:, k] ** 2) - own**2))
        table.add_row(str(k + 1), f"{own:.4f}", f"{cross:.4f}", f"{cross / own:.4f}")
    self_energy, cross_energy = scene.coupling_energy()
    table.caption = f"self energy {self_energy:.4f}, cross energy {cross_energy:.4f}"
    return table
