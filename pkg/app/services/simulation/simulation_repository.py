"""Simulation Repository
=====================
Reads scenario files (YAML, with ``key.sub=value`` overrides applied before
validation) and writes every run artifact: the run-log CSV, the
communication event CSV, the spectrum CSV, weight snapshots and campaign
summaries. Every file starts with ``#`` header lines carrying the run id,
the config hash and the resolved config.
"""

from __future__ import annotations

import csv
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np
import yaml
from pydantic import ValidationError

from app.services.control.control_repository import ControlRepository
from app.services.metrics.metrics_service import SPECTRUM_CONVENTION
from app.services.protocol.protocol_repository import ProtocolRepository
from app.utils.exceptions import ConfigurationError, InputError, configuration_error_from
from app.utils.models import CommPolicyKind, ScenarioFile, WeightSnapshotManifest

if TYPE_CHECKING:
    from app.services.simulation.simulation_service import RunLog, RunSummary

_TOP_LEVEL = ("name", "base", "campaign")
_EVENT_POLICIES = (CommPolicyKind.SYNC_MWD, CommPolicyKind.ASYNC_MWD)


@dataclass(frozen=True)
class RunArtifacts:
    log: Path
    events: Path | None = None
    spectrum: Path | None = None
    weights: Path | None = None


def apply_override(document: dict[str, Any], override: str) -> None:
    """Set ``key.sub=value`` in a raw scenario document.

    Keys not starting with a top-level scenario field are taken relative to
    ``base``; list entries are addressed by index (``campaign.0.penalty``).
    Values are parsed as YAML scalars.
    """
    key, sep, raw = override.partition("=")
    if not sep or not key.strip():
        raise ConfigurationError(f"override '{override}' is not key=value", key=override)
    parts = key.strip().split(".")
    if parts[0] not in _TOP_LEVEL:
        parts = ["base", *parts]
    value = yaml.safe_load(raw) if raw.strip() else None

    node: Any = document
    for i, part in enumerate(parts[:-1]):
        nxt = parts[i + 1]
        if isinstance(node, list):
            try:
                node = node[int(part)]
            except (ValueError, IndexError):
                raise ConfigurationError(f"no list entry '{part}'", key=key)
            continue
        if part not in node or node[part] is None:
            node[part] = [] if nxt.isdigit() else {}
        node = node[part]
    last = parts[-1]
    if isinstance(node, list):
        try:
            node[int(last)] = value
        except (ValueError, IndexError):
            raise ConfigurationError(f"no list entry '{last}'", key=key)
    else:
        node[last] = value


class SimulationRepository:
    def __init__(
        self,
        events: ProtocolRepository | None = None,
        weights: ControlRepository | None = None,
    ) -> None:
        self.events = events or ProtocolRepository()
        self.weights = weights or ControlRepository()

    # -- scenarios -----------------------------------------------------------

    def load_document(self, path: Path) -> dict[str, Any]:
        try:
            with path.open() as fh:
                document = yaml.safe_load(fh)
        except FileNotFoundError:
            raise InputError(f"scenario file {path} does not exist")
        except yaml.YAMLError as e:
            raise ConfigurationError(f"{path} is not valid YAML: {e}")
        if document is None:
            document = {}
        if not isinstance(document, dict):
            raise ConfigurationError(f"{path} must hold a mapping at top level")
        # a bare run config is accepted as the base of a one-entry scenario
        if not set(document) & {"base", "campaign"}:
            name = document.get("name", path.stem)
            document = {"name": name, "base": document}
        document.setdefault("name", path.stem)
        return document

    def load_scenario(self, path: Path, overrides: Sequence[str] = ()) -> ScenarioFile:
        document = self.load_document(path)
        for override in overrides:
            apply_override(document, override)
        return self.validate(document)

    def validate(self, document: dict[str, Any]) -> ScenarioFile:
        try:
            scenario = ScenarioFile.model_validate(document)
            scenario.resolve()
        except ValidationError as e:
            raise configuration_error_from(e)
        return scenario

    # -- run artifacts -------------------------------------------------------

    def write_run(self, out_dir: Path, run_log: RunLog) -> RunArtifacts:
        name = run_log.config.name
        header = self.header_lines(run_log)
        log_path = self.write_log(out_dir / f"{name}_log.csv", run_log, header)

        events_path = None
        if run_log.config.comm_policy.kind in _EVENT_POLICIES:
            events_path = self.events.write_events(
                out_dir / f"{name}_events.csv",
                run_log.events,
                run_log.config.nodes,
                run_log.config.fs,
                header,
            )

        spectrum_path = None
        if run_log.spectra is not None:
            spectrum_path = self.write_spectrum(
                out_dir / f"{name}_spectrum.csv", run_log, header
            )

        weights_path = None
        if run_log.config.output.write_weights:
            manifest = WeightSnapshotManifest(
                run_id=run_log.run_id,
                algorithm=run_log.config.algorithm,
                nodes=run_log.config.nodes,
                filter_length=run_log.config.filter_length,
                samples=run_log.samples,
                config_hash=run_log.config_hash,
            )
            weights_path = self.weights.save(
                out_dir / f"{name}_weights.npz", manifest, run_log.weights, run_log.centers
            )
        return RunArtifacts(log_path, events_path, spectrum_path, weights_path)

    def header_lines(self, run_log: RunLog) -> list[str]:
        return [
            f"run_id: {run_log.run_id}",
            f"config_hash: {run_log.config_hash}",
            f"config: {run_log.config.resolved_json()}",
        ]

    def write_log(self, path: Path, run_log: RunLog, header: Sequence[str]) -> Path:
        config = run_log.config
        k = config.nodes
        step = config.output.decimate
        index = np.arange(run_log.samples)[::step]
        table = np.column_stack(
            [
                index,
                index / config.fs,
                run_log.errors[::step],
                run_log.disturbances[::step],
                run_log.anse[::step],
            ]
        )
        columns = [
            "sample",
            "time_s",
            *(f"e_{m + 1}" for m in range(k)),
            *(f"d_{m + 1}" for m in range(k)),
            "anse_db",
        ]
        lines = [
            *header,
            f"anse: trailing mean over {config.anse_window} samples; nan marks warm-up",
            f"samples: {run_log.samples}; decimate: {step}; "
            f"stopped_early: {str(run_log.stopped_early).lower()}",
            f"comm_events: {run_log.comm_count}; requests: "
            + ",".join(str(int(r)) for r in run_log.requests),
        ]
        fmt = ["%d", "%.17g", *(["%.17g"] * (2 * k + 1))]
        return self._write_table(path, lines, columns, table, fmt)

    def write_spectrum(self, path: Path, run_log: RunLog, header: Sequence[str]) -> Path:
        spectra = run_log.spectra
        if spectra is None:
            raise ConfigurationError("run has no spectra to write")
        columns = ["frequency_hz", *spectra.columns]
        table = np.column_stack([spectra.frequencies, *spectra.columns.values()])
        seconds = run_log.config.output.spectrum_seconds
        lines = [
            *header,
            f"spectrum: final {seconds:g} s of the run; {SPECTRUM_CONVENTION}",
        ]
        return self._write_table(path, lines, columns, table, "%.17g")

    def write_summary(self, path: Path, summaries: Sequence[RunSummary]) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                [
                    "name",
                    "algorithm",
                    "run_id",
                    "samples",
                    "final_anse_db",
                    "comm_events",
                    "comm_ratio",
                ]
            )
            for s in summaries:
                writer.writerow(
                    [
                        s.name,
                        s.algorithm.value,
                        s.run_id,
                        s.samples,
                        repr(s.final_anse),
                        s.comm_count,
                        repr(s.comm_ratio),
                    ]
                )
        return path

    def _write_table(
        self,
        path: Path,
        header: Sequence[str],
        columns: Sequence[str],
        table: np.ndarray,
        fmt: str | Sequence[str],
    ) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as fh:
            for line in header:
                fh.write(f"# {line}\n")
            fh.write(",".join(columns) + "\n")
            np.savetxt(fh, table, fmt=fmt, delimiter=",")
        return path

    # -- readers -------------------------------------------------------------

    def read_table(self, path: Path) -> tuple[list[str], np.ndarray]:
        """Column names and data of a CSV written by this repository."""
        with path.open() as fh:
            lines = [line for line in fh if not line.startswith("#")]
        columns = lines[0].strip().split(",")
        data = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
        return columns, data

    def read_header(self, path: Path) -> dict[str, str]:
        header: dict[str, str] = {}
        with path.open() as fh:
            for line in fh:
                if not line.startswith("# "):
                    break
                key, _, value = line[2:].rstrip("\n").partition(": ")
                header[key] = value
        return header
