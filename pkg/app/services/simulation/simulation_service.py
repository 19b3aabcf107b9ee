"""Simulation Harness
==================
Runs the per-sample loop that wires every service together and collects
the run log:

    reference → disturbance → control output → residual error →
    filtered reference → filter update → window trigger / events

Campaigns run several algorithms on one shared scene and noise seed, either
sequentially or as independent worker processes.
"""

from __future__ import annotations

from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
import sentry_sdk
import structlog
from numpy.typing import NDArray

from app.services.compensation.compensation_service import CompensationSet
from app.services.control.control_service import ControlNetwork, FilteredReferenceBank
from app.services.metrics.metrics_service import (
    SpectrumTable,
    anse_series,
    spectrum_table,
)
from app.services.protocol.protocol_service import (
    CommEvent,
    LinkScheduler,
    TriggerMonitor,
    collect_payloads,
    deliver_async_event,
    execute_async_event,
    execute_sync_event,
)
from app.services.scene.scene_service import AcousticScene
from app.services.signal.signal_service import FloatArray, NoiseSource, TappedDelayLine
from app.utils.config import settings
from app.utils.exceptions import (
    CausalityError,
    ConfigurationError,
    NotReadyError,
    NumericalAbortError,
    StreamExhaustedError,
)
from app.utils.models import (
    AlgorithmKind,
    CommPolicyKind,
    GradientFusion,
    ScenarioFile,
    SimConfig,
)

if TYPE_CHECKING:
    from app.services.simulation.simulation_repository import (
        RunArtifacts,
        SimulationRepository,
    )

logger = structlog.get_logger(__name__)

STAGES = (
    "reference",
    "disturbance",
    "output",
    "residual",
    "filtered_reference",
    "update",
    "trigger",
)


class StageAudit:
    """Asserts that every sample walks the pipeline stages in order."""

    def __init__(self) -> None:
        self.sample = -1
        self._last = len(STAGES)

    def mark(self, sample: int, stage: str) -> None:
        index = STAGES.index(stage)
        if sample != self.sample:
            if sample != self.sample + 1 or index != 0:
                raise CausalityError(
                    f"sample {sample} started at stage '{stage}' after sample {self.sample}"
                )
            self.sample = sample
        elif index <= self._last:
            raise CausalityError(
                f"stage '{stage}' ran after '{STAGES[self._last]}' in sample {sample}"
            )
        self._last = index


@dataclass
class RunLog:
    config: SimConfig
    errors: FloatArray
    disturbances: FloatArray
    anse: FloatArray
    weights: FloatArray
    centers: FloatArray
    events: list[CommEvent] = field(default_factory=list)
    comm_count: int = 0
    requests: NDArray[np.int64] = field(
        default_factory=lambda: np.zeros(0, dtype=np.int64)
    )
    stopped_early: bool = False
    spectra: SpectrumTable | None = None

    @property
    def config_hash(self) -> str:
        return self.config.config_hash()

    @property
    def run_id(self) -> str:
        return f"{self.config.name}-{self.config_hash[:12]}"

    @property
    def samples(self) -> int:
        return int(self.errors.shape[0])

    @property
    def comm_ratio(self) -> float:
        return self.comm_count / self.samples if self.samples else 0.0

    @property
    def final_anse(self) -> float:
        finite = self.anse[np.isfinite(self.anse)]
        return float(finite[-1]) if finite.size else float("nan")


def _first_bad(values: FloatArray) -> int:
    return int(np.flatnonzero(~np.isfinite(values))[0])


def run_scenario(
    config: SimConfig,
    scene: AcousticScene,
    source: NoiseSource,
    compensation: CompensationSet | None = None,
    audit: StageAudit | None = None,
) -> RunLog:
    """Simulate ``config.sample_count`` samples and return the complete log."""
    nodes, length = config.nodes, config.filter_length
    algorithm = config.algorithm
    policy = config.comm_policy

    if scene.nodes != nodes:
        raise ConfigurationError(
            f"scene has {scene.nodes} nodes, config asks for {nodes}", key="nodes"
        )
    if compensation is not None and compensation.nodes != nodes:
        raise ConfigurationError("compensation set does not match the node count")
    if algorithm.needs_compensation and nodes > 1 and compensation is None:
        raise ConfigurationError(
            f"{algorithm.value} needs compensation filters", key="compensation"
        )
    delay = config.trigger.link_delay
    if delay and policy.kind is not CommPolicyKind.ASYNC_MWD:
        raise ConfigurationError(
            "link delay applies to asynchronous exchange only", key="trigger.link_delay"
        )

    aligned = (
        algorithm is AlgorithmKind.MGDFXLMS
        and config.gradient_fusion is GradientFusion.ALIGNED
        and compensation is not None
    )
    grad_taps = length + compensation.length - 1 if aligned and compensation else length
    kernel = compensation.kernel() if compensation is not None else None

    x_line = TappedDelayLine(max(length, scene.primary_length, scene.estimate_length))
    y_line = TappedDelayLine(scene.secondary_length, (nodes,))
    bank = FilteredReferenceBank(nodes, grad_taps, cross=algorithm.needs_cross_references)
    network = ControlNetwork(nodes, length, config.step_sizes, config.penalties)

    triggered_policy = policy.kind in (CommPolicyKind.SYNC_MWD, CommPolicyKind.ASYNC_MWD)
    monitors = (
        [
            TriggerMonitor(
                config.trigger.period,
                config.fs,
                config.trigger.hysteresis,
                config.trigger.epsilon_floor,
            )
            for _ in range(nodes)
        ]
        if triggered_policy
        else []
    )
    window_len = monitors[0].window_len if monitors else 0
    floor = config.trigger.epsilon_floor
    eta = np.zeros(nodes)
    scheduler = LinkScheduler(delay)

    total = config.sample_count
    errors = np.zeros((total, nodes))
    disturbances = np.zeros((total, nodes))
    events: list[CommEvent] = []
    requests = np.zeros(nodes, dtype=np.int64)
    comm_count = 0
    stopped_early = False
    n_run = total

    log = logger.bind(run=config.name, algorithm=algorithm.value, nodes=nodes)
    log.info("run_started", samples=total, policy=policy.kind.value)

    for n in range(total):
        if audit:
            audit.mark(n, "reference")
        try:
            x = source.next_sample()
        except StreamExhaustedError:
            stopped_early = True
            n_run = n
            log.info("noise_stream_exhausted", sample=n)
            break
        x_line.push(x)

        if audit:
            audit.mark(n, "disturbance")
        d = scene.disturbance_vector(x_line)

        if audit:
            audit.mark(n, "output")
        y_line.push(network.outputs(x_line))

        if audit:
            audit.mark(n, "residual")
        e = scene.residual_vector(d, y_line)
        if not np.all(np.isfinite(e)):
            raise NumericalAbortError(_first_bad(e), n, "residual error")
        errors[n] = e
        disturbances[n] = d

        if audit:
            audit.mark(n, "filtered_reference")
        bank.feed(scene, x_line)

        if audit:
            audit.mark(n, "update")
        if algorithm is AlgorithmKind.FXLMS:
            network.apply_fxlms(network.gradients(e, bank.self_window(length)))
        elif algorithm.weight_constrained:
            network.apply_wcfxlms(network.gradients(e, bank.self_window(length)))
        elif algorithm is AlgorithmKind.MEFXLMS:
            network.apply_mefxlms(e, bank.cross_window(length))
        elif algorithm is AlgorithmKind.MGDFXLMS:
            gradients = network.gradients(e, bank.self_window(grad_taps))
            if kernel is None:
                network.apply_fxlms(gradients)
            else:
                network.apply_mgdfxlms(gradients, kernel, config.gradient_fusion)
            comm_count += 1
        if algorithm is not AlgorithmKind.NONE and not network.is_finite():
            bad_node = _first_bad(network.weights.sum(axis=1))
            raise NumericalAbortError(bad_node, n, "control filter")

        if audit:
            audit.mark(n, "trigger")
        if triggered_policy:
            eta += 10.0 * np.log10(np.maximum(e * e, floor))
            if (n + 1) % window_len == 0:
                triggered = []
                for k, monitor in enumerate(monitors):
                    monitor.accumulate(float(eta[k]), window_len)
                    if monitor.should_request(monitor.arnl()):
                        triggered.append(k)
                eta[:] = 0.0
                requests[triggered] += 1

                if policy.kind is CommPolicyKind.SYNC_MWD and triggered:
                    events.append(
                        execute_sync_event(
                            network.states, compensation, sample=n, triggered=tuple(triggered)
                        )
                    )
                    comm_count += 1
                elif policy.kind is CommPolicyKind.ASYNC_MWD:
                    for k in triggered:
                        comm_count += 1
                        if delay == 0:
                            events.append(
                                execute_async_event(
                                    network.states,
                                    k,
                                    compensation,
                                    policy.transmitter_reset,
                                    sample=n,
                                )
                            )
                        else:
                            payloads = collect_payloads(
                                network.states, k, policy.transmitter_reset
                            )
                            scheduler.schedule(n, k, payloads)
            if delay:
                for pending in scheduler.due(n):
                    events.append(
                        deliver_async_event(
                            network.states,
                            pending.requester,
                            pending.payloads,
                            compensation,
                            sample=n,
                            requested_at=pending.requested_at,
                        )
                    )

    errors = errors[:n_run]
    disturbances = disturbances[:n_run]
    run_log = RunLog(
        config=config,
        errors=errors,
        disturbances=disturbances,
        anse=anse_series(errors, disturbances, config.anse_window),
        weights=network.weights.copy(),
        centers=network.centers.copy(),
        events=events,
        comm_count=comm_count,
        requests=requests,
        stopped_early=stopped_early,
    )
    if config.output.write_spectrum:
        run_log.spectra = _final_spectra(run_log)

    log.info(
        "run_finished",
        samples=run_log.samples,
        final_anse=run_log.final_anse,
        comm_events=comm_count,
    )
    return run_log


def _final_spectra(run_log: RunLog) -> SpectrumTable | None:
    config = run_log.config
    segment = round(config.output.spectrum_seconds * config.fs)
    try:
        return spectrum_table(
            run_log.errors[-segment:], run_log.disturbances[-segment:], config.fs
        )
    except NotReadyError as e:
        logger.warning("spectrum_skipped", run=config.name, reason=e.message)
        return None


# ============================================================
# SERVICE
# ============================================================


@dataclass(frozen=True)
class RunSummary:
    name: str
    algorithm: AlgorithmKind
    run_id: str
    samples: int
    final_anse: float
    comm_count: int
    comm_ratio: float
    artifacts: RunArtifacts


class SimulationService:
    def __init__(self, repository: SimulationRepository) -> None:
        self.repository = repository

    def run(
        self,
        config: SimConfig,
        scene: AcousticScene,
        source: NoiseSource,
        compensation: CompensationSet | None,
        out_dir: Path,
    ) -> tuple[RunLog, RunSummary]:
        audit = StageAudit() if settings.STAGE_AUDIT else None
        try:
            run_log = run_scenario(config, scene, source, compensation, audit)
        except NumericalAbortError as e:
            sentry_sdk.capture_exception(e)
            logger.error(
                "run_aborted", run=config.name, node=e.node + 1, sample=e.sample
            )
            raise
        artifacts = self.repository.write_run(out_dir, run_log)
        summary = RunSummary(
            name=config.name,
            algorithm=config.algorithm,
            run_id=run_log.run_id,
            samples=run_log.samples,
            final_anse=run_log.final_anse,
            comm_count=run_log.comm_count,
            comm_ratio=run_log.comm_ratio,
            artifacts=artifacts,
        )
        return run_log, summary

    def run_campaign(
        self,
        scenario: ScenarioFile,
        out_dir: Path,
        jobs: int = 1,
    ) -> list[RunSummary]:
        """Run every campaign entry on the scene and noise seed of the base config."""
        # local import keeps the wiring module free of import cycles
        from app.utils import delegate

        configs = scenario.resolve()
        scene = delegate.resolve_scene(scenario.base)
        needs_comp = any(c.algorithm.needs_compensation for c in configs)
        compensation = (
            delegate.resolve_compensation(scenario.base, scene) if needs_comp else None
        )
        target = out_dir / scenario.name
        logger.info(
            "campaign_started", scenario=scenario.name, entries=len(configs), jobs=jobs
        )

        if jobs > 1 and len(configs) > 1:
            with ProcessPoolExecutor(max_workers=min(jobs, len(configs))) as pool:
                futures = [
                    pool.submit(_campaign_job, config, scene, compensation, target)
                    for config in configs
                ]
                summaries = [f.result() for f in futures]
        else:
            summaries = [
                _campaign_job(config, scene, compensation, target) for config in configs
            ]

        self.repository.write_summary(target / f"{scenario.name}_summary.csv", summaries)
        return summaries


def _campaign_job(
    config: SimConfig,
    scene: AcousticScene,
    compensation: CompensationSet | None,
    out_dir: Path,
) -> RunSummary:
    from app.utils import delegate

    service = delegate.get_simulation_service()
    entry_comp = compensation if config.algorithm.needs_compensation else None
    _, summary = service.run(
        config, scene, delegate.build_noise_source(config), entry_comp, out_dir
    )
    return summary


def summaries_table(summaries: Sequence[RunSummary]) -> list[dict[str, str]]:
    return [
        {
            "name": s.name,
            "algorithm": s.algorithm.value,
            "final_anse_db": f"{s.final_anse:.2f}",
            "comm_events": str(s.comm_count),
            "comm_ratio": f"{s.comm_ratio:.6f}",
            "samples": str(s.samples),
            "run_id": s.run_id,
        }
        for s in summaries
    ]
