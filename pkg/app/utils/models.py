"""Pydantic Schema Organization
============================
This module contains every configuration schema, archive manifest and
related enumeration, organized by functional area. Runtime numeric state
(delay lines, filters, scenes) lives in the services; only what is read
from or written to disk is modelled here.
"""

from __future__ import annotations

import hashlib
import json
import math
from enum import Enum
from pathlib import Path
from typing import Any, Literal

try:
    from typing import Self
except ImportError:  # Python < 3.11
    from typing_extensions import Self

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# ============================================================
# ENUMS
# ============================================================


class NoiseKind(str, Enum):
    """Primary noise source kind."""

    BANDPASS_WHITE = "bandpass-white"
    TONAL_MIXTURE = "tonal-mixture"
    FILE_STREAM = "file-stream"


class ExhaustPolicy(str, Enum):
    """What a file-stream source does at end of file."""

    LOOP = "loop"
    STOP = "stop"


class SceneSource(str, Enum):
    SYNTHESIZE = "synthesize"
    FACTORABLE = "factorable"
    FILE = "file"


class CommPolicyKind(str, Enum):
    NONE = "none"
    PER_SAMPLE_GRADIENT = "per-sample-gradient"
    SYNC_MWD = "sync-MWD"
    ASYNC_MWD = "async-MWD"


class TransmitterReset(str, Enum):
    """Whether transmitters fold their sent weight difference into their center."""

    RESET = "reset"
    KEEP = "keep"


class GradientFusion(str, Enum):
    """How a received gradient is mapped through a compensation filter."""

    ALIGNED = "aligned"
    TRUNCATED = "truncated"


class AlgorithmKind(str, Enum):
    """Control algorithm run by the network."""

    NONE = "none"
    FXLMS = "FxLMS"
    WCFXLMS = "WCFxLMS"
    MEFXLMS = "MEFxLMS"
    MGDFXLMS = "MGDFxLMS"
    SCDMCANC = "SCDMCANC"
    ACDMCANC = "ACDMCANC"

    @property
    def comm_policy(self) -> CommPolicyKind:
        return {
            AlgorithmKind.MGDFXLMS: CommPolicyKind.PER_SAMPLE_GRADIENT,
            AlgorithmKind.SCDMCANC: CommPolicyKind.SYNC_MWD,
            AlgorithmKind.ACDMCANC: CommPolicyKind.ASYNC_MWD,
        }.get(self, CommPolicyKind.NONE)

    @property
    def weight_constrained(self) -> bool:
        return self in (
            AlgorithmKind.WCFXLMS,
            AlgorithmKind.SCDMCANC,
            AlgorithmKind.ACDMCANC,
        )

    @property
    def needs_compensation(self) -> bool:
        return self.comm_policy is not CommPolicyKind.NONE

    @property
    def needs_cross_references(self) -> bool:
        return self is AlgorithmKind.MEFXLMS


# ============================================================
# NOISE MODULE
# ============================================================


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class Tone(_Strict):
    """One sinusoid of a tonal mixture."""

    frequency: float = Field(gt=0)
    amplitude: float = 1.0
    phase: float = 0.0


class NoiseSourceSpec(_Strict):
    """Primary noise source parameters."""

    kind: NoiseKind = NoiseKind.BANDPASS_WHITE
    band: tuple[float, float] = (100.0, 1000.0)
    tolerance_band: float = Field(default=400.0, ge=0)
    fir_taps: int = Field(default=255, ge=3)
    seed: int | None = None
    amplitude: float = Field(default=1.0, ge=0)
    tones: list[Tone] = Field(default_factory=list)
    path: Path | None = None
    on_exhausted: ExhaustPolicy = ExhaustPolicy.LOOP

    @model_validator(mode="after")
    def _check_kind_fields(self) -> Self:
        low, high = self.band
        if not 0 < low < high:
            raise ValueError("band must satisfy 0 < low < high")
        if self.fir_taps % 2 == 0:
            raise ValueError("fir_taps length must be odd for a linear-phase bandpass")
        if self.kind is NoiseKind.TONAL_MIXTURE and not self.tones:
            raise ValueError("tonal-mixture needs at least one tone")
        if self.kind is NoiseKind.FILE_STREAM and self.path is None:
            raise ValueError("file-stream needs a path")
        return self

    @property
    def stop_band(self) -> tuple[float, float]:
        """``band`` widened by ``tolerance_band``; power outside it is rejected."""
        low, high = self.band
        return max(low - self.tolerance_band, 0.0), high + self.tolerance_band


# ============================================================
# SCENE MODULE
# ============================================================


class PathSynthesisSpec(_Strict):
    """Parameters for synthetic primary and secondary paths."""

    seed: int | None = None
    length: int = Field(default=256, ge=1)
    delay_min: int = Field(default=4, ge=0)
    delay_max: int = Field(default=24, ge=0)
    decay: float = Field(default=32.0, gt=0)
    cross_attenuation: float = Field(default=0.5, gt=0, le=1)
    primary_length: int = Field(default=256, ge=1)
    primary_delay_min: int = Field(default=32, ge=0)
    primary_delay_max: int = Field(default=48, ge=0)
    primary_decay: float | None = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _check_delays(self) -> Self:
        if not self.delay_min <= self.delay_max < self.length:
            raise ValueError("delay range must satisfy delay_min <= delay_max < length")
        if not self.primary_delay_min <= self.primary_delay_max < self.primary_length:
            raise ValueError(
                "primary delay range must satisfy min <= max < primary_length"
            )
        return self


class SceneSettings(_Strict):
    source: SceneSource = SceneSource.SYNTHESIZE
    synthesis: PathSynthesisSpec = Field(default_factory=PathSynthesisSpec)
    self_length: int | None = Field(default=None, ge=1)
    path: Path | None = None
    # None (or -inf) leaves the secondary path estimates exact
    mismatch_db: float | None = None

    @field_validator("mismatch_db")
    @classmethod
    def _minus_infinity_is_none(cls, v: float | None) -> float | None:
        if v is not None and math.isinf(v):
            if v > 0:
                raise ValueError("mismatch_db must be finite or -inf")
            return None
        return v

    @model_validator(mode="after")
    def _check_source(self) -> Self:
        if self.source is SceneSource.FILE and self.path is None:
            raise ValueError("scene source 'file' needs a path")
        return self

    @property
    def has_mismatch(self) -> bool:
        return self.mismatch_db is not None


class CompensationSettings(_Strict):
    length: int = Field(default=33, ge=1)
    path: Path | None = None


# ============================================================
# PROTOCOL MODULE
# ============================================================


class CommPolicy(_Strict):
    """Communication policy of a run; fixed for its duration."""

    kind: CommPolicyKind = CommPolicyKind.NONE
    transmitter_reset: TransmitterReset = TransmitterReset.RESET


class TriggerSettings(_Strict):
    period: float = Field(default=0.3, gt=0)
    hysteresis: float = Field(default=0.0, ge=0)
    epsilon_floor: float = Field(default=1e-20, gt=0)
    transmitter_reset: TransmitterReset = TransmitterReset.RESET
    link_delay: int = Field(default=0, ge=0)


# ============================================================
# SIMULATION MODULE
# ============================================================


class OutputSettings(_Strict):
    directory: Path | None = None
    decimate: int = Field(default=1, ge=1)
    write_weights: bool = True
    write_spectrum: bool = True
    spectrum_seconds: float = Field(default=5.0, gt=0)


NodeValues = float | list[float]


class SimConfig(_Strict):
    """Fully resolved configuration of one simulation run."""

    name: str = "run"
    seed: int = 0
    nodes: int = Field(default=4, ge=1)
    filter_length: int = Field(default=512, ge=1)
    fs: float = Field(default=16000.0, gt=0)
    duration: float = Field(default=1.0, gt=0)
    algorithm: AlgorithmKind = AlgorithmKind.ACDMCANC
    step_size: NodeValues = 1e-6
    penalty: NodeValues = 800.0
    gradient_fusion: GradientFusion = GradientFusion.ALIGNED
    anse_window: int = Field(default=5000, ge=1)
    scene: SceneSettings = Field(default_factory=SceneSettings)
    compensation: CompensationSettings = Field(default_factory=CompensationSettings)
    noise: NoiseSourceSpec = Field(default_factory=NoiseSourceSpec)
    trigger: TriggerSettings = Field(default_factory=TriggerSettings)
    output: OutputSettings = Field(default_factory=OutputSettings)

    @field_validator("step_size")
    @classmethod
    def _positive_steps(cls, v: NodeValues) -> NodeValues:
        values = v if isinstance(v, list) else [v]
        if not values or any(not (math.isfinite(x) and x > 0) for x in values):
            raise ValueError("step sizes must be finite and > 0")
        return v

    @field_validator("penalty")
    @classmethod
    def _non_negative_penalties(cls, v: NodeValues) -> NodeValues:
        values = v if isinstance(v, list) else [v]
        if not values or any(not (math.isfinite(x) and x >= 0) for x in values):
            raise ValueError("penalty factors must be finite and >= 0")
        return v

    @model_validator(mode="after")
    def _check_consistency(self) -> Self:
        samples = self.duration * self.fs
        if abs(samples - round(samples)) > 1e-6:
            raise ValueError("duration * fs must be an integral sample count")
        for name in ("step_size", "penalty"):
            value = getattr(self, name)
            if isinstance(value, list) and len(value) != self.nodes:
                raise ValueError(f"{name} list length must equal nodes")
        if self.algorithm.weight_constrained:
            for k, (mu, alpha) in enumerate(
                zip(self.step_sizes, self.penalties, strict=True)
            ):
                if mu * alpha >= 1:
                    raise ValueError(
                        f"step_size * penalty must be < 1 (node {k + 1}: {mu * alpha:g})"
                    )
        return self

    # -- derived quantities --------------------------------------------------

    @property
    def sample_count(self) -> int:
        return round(self.duration * self.fs)

    @property
    def step_sizes(self) -> tuple[float, ...]:
        v = self.step_size
        return tuple(v) if isinstance(v, list) else (float(v),) * self.nodes

    @property
    def penalties(self) -> tuple[float, ...]:
        v = self.penalty
        return tuple(v) if isinstance(v, list) else (float(v),) * self.nodes

    @property
    def comm_policy(self) -> CommPolicy:
        return CommPolicy(
            kind=self.algorithm.comm_policy,
            transmitter_reset=self.trigger.transmitter_reset,
        )

    @property
    def scene_seed(self) -> int:
        seed = self.scene.synthesis.seed
        return self.seed if seed is None else seed

    @property
    def noise_seed(self) -> int:
        return self.seed + 1 if self.noise.seed is None else self.noise.seed

    @property
    def mismatch_seed(self) -> int:
        return self.seed + 2

    def resolved_json(self) -> str:
        return json.dumps(
            self.model_dump(mode="json"), sort_keys=True, separators=(",", ":")
        )

    def config_hash(self) -> str:
        return hashlib.sha256(self.resolved_json().encode()).hexdigest()


class CampaignEntry(_Strict):
    """One algorithm of a comparison campaign sharing the base scene and noise."""

    name: str
    algorithm: AlgorithmKind
    step_size: NodeValues | None = None
    penalty: NodeValues | None = None
    gradient_fusion: GradientFusion | None = None
    transmitter_reset: TransmitterReset | None = None


class ScenarioFile(_Strict):
    """Top-level scenario document."""

    name: str = "scenario"
    base: SimConfig = Field(default_factory=SimConfig)
    campaign: list[CampaignEntry] = Field(default_factory=list)

    @field_validator("campaign")
    @classmethod
    def _unique_names(cls, v: list[CampaignEntry]) -> list[CampaignEntry]:
        names = [entry.name for entry in v]
        if len(set(names)) != len(names):
            raise ValueError("campaign entry names must be unique")
        return v

    def resolve(self) -> list[SimConfig]:
        """Expand the campaign into validated per-entry configs."""
        if not self.campaign:
            return [self.base]

        configs = []
        base = self.base.model_dump(mode="json")
        for entry in self.campaign:
            data: dict[str, Any] = json.loads(json.dumps(base))
            data["name"] = entry.name
            data["algorithm"] = entry.algorithm.value
            for field in ("step_size", "penalty", "gradient_fusion"):
                value = getattr(entry, field)
                if value is not None:
                    data[field] = value
            if entry.transmitter_reset is not None:
                data["trigger"]["transmitter_reset"] = entry.transmitter_reset.value
            configs.append(SimConfig.model_validate(data))
        return configs


# ============================================================
# ARCHIVE MANIFESTS
# ============================================================


class SceneManifest(_Strict):
    kind: Literal["scene"] = "scene"
    format_version: int = 1
    nodes: int = Field(ge=1)
    primary_length: int = Field(ge=1)
    secondary_length: int = Field(ge=1)
    estimate_length: int = Field(ge=1)
    fs: float = Field(gt=0)
    description: str = ""


class CompensationManifest(_Strict):
    kind: Literal["compensation"] = "compensation"
    format_version: int = 1
    nodes: int = Field(ge=1)
    length: int = Field(ge=1)


class WeightSnapshotManifest(_Strict):
    kind: Literal["weights"] = "weights"
    format_version: int = 1
    run_id: str
    algorithm: AlgorithmKind
    nodes: int = Field(ge=1)
    filter_length: int = Field(ge=1)
    samples: int = Field(ge=0)
    config_hash: str
