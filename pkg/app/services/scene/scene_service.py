"""Acoustic Scene
==============
Holds the acoustic environment of a K-node network (primary paths, true and
estimated secondary paths), produces disturbances and residual errors, and
synthesizes plausible paths when measured responses are not available.

Secondary path matrices are sensor-major: ``secondary_true[m, k]`` is the
path from secondary source ``k`` to error sensor ``m``.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import structlog
from numpy.typing import ArrayLike

from app.services.signal.signal_service import (
    FloatArray,
    ImpulseResponse,
    TappedDelayLine,
    fir_step,
)
from app.utils.exceptions import ConfigurationError, InputError
from app.utils.models import PathSynthesisSpec

logger = structlog.get_logger(__name__)


def _frozen(values: ArrayLike, ndim: int, name: str) -> FloatArray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise InputError(f"{name} must be a {ndim}-d tap array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} holds non-finite taps")
    arr.setflags(write=False)
    return arr


class AcousticScene:
    """Immutable set of primary and secondary paths for K nodes."""

    def __init__(
        self,
        primary: ArrayLike,
        secondary_true: ArrayLike,
        secondary_est: ArrayLike | None = None,
        fs: float = 16000.0,
    ) -> None:
        self.primary = _frozen(primary, 2, "primary")
        self.secondary_true = _frozen(secondary_true, 3, "secondary_true")
        self.secondary_est = (
            self.secondary_true
            if secondary_est is None
            else _frozen(secondary_est, 3, "secondary_est")
        )
        self.fs = float(fs)

        k = self.primary.shape[0]
        if k < 1 or self.primary.shape[1] < 1:
            raise InputError("scene needs at least one node and one primary tap")
        for name, paths in (
            ("secondary_true", self.secondary_true),
            ("secondary_est", self.secondary_est),
        ):
            if paths.shape[:2] != (k, k) or paths.shape[2] < 1:
                raise InputError(
                    f"{name} must have shape ({k}, {k}, L), got {paths.shape}"
                )

    @property
    def nodes(self) -> int:
        return int(self.primary.shape[0])

    @property
    def primary_length(self) -> int:
        return int(self.primary.shape[1])

    @property
    def secondary_length(self) -> int:
        return int(self.secondary_true.shape[2])

    @property
    def estimate_length(self) -> int:
        return int(self.secondary_est.shape[2])

    def primary_path(self, k: int) -> ImpulseResponse:
        return ImpulseResponse(self.primary[k])

    def path(self, m: int, k: int) -> ImpulseResponse:
        return ImpulseResponse(self.secondary_true[m, k])

    def estimate(self, m: int, k: int) -> ImpulseResponse:
        return ImpulseResponse(self.secondary_est[m, k])

    def with_estimates(self, secondary_est: ArrayLike) -> AcousticScene:
        return AcousticScene(self.primary, self.secondary_true, secondary_est, self.fs)

    def subscene(self, nodes: Sequence[int]) -> AcousticScene:
        """Scene restricted to ``nodes`` (their primary paths and mutual paths)."""
        idx = np.asarray(nodes, dtype=int)
        return AcousticScene(
            self.primary[idx],
            self.secondary_true[np.ix_(idx, idx)],
            self.secondary_est[np.ix_(idx, idx)],
            self.fs,
        )

    def coupling_energy(self) -> tuple[float, float]:
        """(sum of self-path energies, sum of cross-path energies) of the true paths."""
        energy = np.sum(self.secondary_true**2, axis=2)
        self_energy = float(np.trace(energy))
        return self_energy, float(energy.sum() - self_energy)

    # -- node-stacked forms used by the sample loop --------------------------

    def disturbance_vector(self, reference_line: TappedDelayLine) -> FloatArray:
        if reference_line.capacity < self.primary_length:
            raise ConfigurationError(
                f"reference line capacity {reference_line.capacity} < "
                f"primary path length {self.primary_length}"
            )
        return self.primary @ reference_line.window(self.primary_length)

    def residual_vector(
        self, disturbances: FloatArray, control_line: TappedDelayLine
    ) -> FloatArray:
        """``d - S ⊛ y`` for all sensors; ``control_line`` carries one lane per source."""
        if control_line.capacity < self.secondary_length:
            raise ConfigurationError(
                f"control line capacity {control_line.capacity} < "
                f"secondary path length {self.secondary_length}"
            )
        history = control_line.window(self.secondary_length)
        return disturbances - np.tensordot(
            self.secondary_true, history, axes=([1, 2], [0, 1])
        )


# ============================================================
# PER-SAMPLE OPERATIONS
# ============================================================


def disturbance(scene: AcousticScene, k: int, reference_line: TappedDelayLine) -> float:
    """d_k(n): the reference filtered by primary path p_k."""
    return fir_step(reference_line, scene.primary_path(k))


def residual_error(
    scene: AcousticScene,
    m: int,
    d_m: float,
    control_lines: Sequence[TappedDelayLine],
) -> float:
    """e_m(n) = d_m(n) - sum_k (y_k * s_mk)(n).

    The m != k terms of the sum are the crosstalk other nodes inject at
    sensor m; they are computed here and never stored.
    """
    if len(control_lines) != scene.nodes:
        raise ConfigurationError(
            f"expected {scene.nodes} control lines, got {len(control_lines)}"
        )
    anti_noise = sum(
        fir_step(line, scene.path(m, k)) for k, line in enumerate(control_lines)
    )
    return d_m - anti_noise


# ============================================================
# SYNTHESIS
# ============================================================


def _decaying_path(
    rng: np.random.Generator, length: int, delay: int, decay: float
) -> FloatArray:
    taps = np.zeros(length)
    n = length - delay
    taps[delay:] = rng.standard_normal(n) * np.exp(-np.arange(n) / decay)
    return taps / np.linalg.norm(taps)


def _cross_delay(rng: np.random.Generator, spec: PathSynthesisSpec) -> int:
    if spec.delay_max > spec.delay_min:
        return int(rng.integers(spec.delay_min + 1, spec.delay_max + 1))
    return spec.delay_min


def _primary_paths(
    rng: np.random.Generator, spec: PathSynthesisSpec, nodes: int
) -> FloatArray:
    decay = spec.primary_decay or spec.decay
    return np.stack(
        [
            _decaying_path(
                rng,
                spec.primary_length,
                int(rng.integers(spec.primary_delay_min, spec.primary_delay_max + 1)),
                decay,
            )
            for _ in range(nodes)
        ]
    )


def _check_nodes(nodes: int) -> None:
    if nodes < 1:
        raise ConfigurationError(f"node count must be >= 1, got {nodes}", key="nodes")


def synthesize_scene(
    spec: PathSynthesisSpec, nodes: int, fs: float = 16000.0, seed: int | None = None
) -> AcousticScene:
    """Random self-dominant scene; deterministic in the seed.

    Self paths start at ``delay_min``; cross paths start later and share the
    crosstalk budget so that the combined cross energy leaving each source
    is ``cross_attenuation²`` times its self-path energy.
    """
    _check_nodes(nodes)
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    primary = _primary_paths(rng, spec, nodes)

    secondary = np.zeros((nodes, nodes, spec.length))
    cross_gain = spec.cross_attenuation / math.sqrt(max(nodes - 1, 1))
    for k in range(nodes):
        secondary[k, k] = _decaying_path(rng, spec.length, spec.delay_min, spec.decay)
        for m in range(nodes):
            if m == k:
                continue
            cross = _decaying_path(rng, spec.length, _cross_delay(rng, spec), spec.decay)
            secondary[m, k] = cross_gain * cross

    scene = AcousticScene(primary, secondary, fs=fs)
    self_energy, cross_energy = scene.coupling_energy()
    logger.info(
        "scene_synthesized",
        nodes=nodes,
        secondary_length=spec.length,
        self_energy=self_energy,
        cross_energy=cross_energy,
    )
    return scene


@dataclass(frozen=True)
class FactorableScene:
    scene: AcousticScene
    # compensation filters that generated the cross paths; diagonal is zero
    compensation: FloatArray


def factorable_scene(
    spec: PathSynthesisSpec,
    nodes: int,
    compensation_length: int,
    fs: float = 16000.0,
    self_length: int | None = None,
    compensation: ArrayLike | None = None,
    seed: int | None = None,
) -> FactorableScene:
    """Scene whose cross paths are exactly ``s_mm * c_mk``.

    Self paths occupy the first ``self_length`` taps (default
    ``length - compensation_length + 1``); ``compensation`` may supply the
    generating filters as a ``(K, K, L_c)`` array, otherwise they are drawn
    at random and scaled by the crosstalk budget.
    """
    _check_nodes(nodes)
    l_s, l_c = spec.length, compensation_length
    if l_c < 1:
        raise ConfigurationError("compensation length must be >= 1", key="compensation.length")
    l_self = l_s - l_c + 1 if self_length is None else self_length
    if l_self < 1 or l_s < l_self + l_c - 1:
        raise ConfigurationError(
            f"secondary length {l_s} < self length {l_self} + compensation "
            f"length {l_c} - 1",
            key="scene.self_length",
        )
    if spec.delay_min >= l_self:
        raise ConfigurationError(
            f"self-path delay {spec.delay_min} does not fit {l_self} taps",
            key="scene.synthesis.delay_min",
        )

    rng = np.random.default_rng(spec.seed if seed is None else seed)
    primary = _primary_paths(rng, spec, nodes)

    if compensation is None:
        filters = np.zeros((nodes, nodes, l_c))
        cross_gain = spec.cross_attenuation / math.sqrt(max(nodes - 1, 1))
        envelope = np.exp(-np.arange(l_c) / max(l_c / 3, 1.0))
        for m in range(nodes):
            for k in range(nodes):
                if m != k:
                    c = rng.standard_normal(l_c) * envelope
                    filters[m, k] = cross_gain * c / np.linalg.norm(c)
    else:
        filters = np.array(compensation, dtype=np.float64)
        if filters.shape != (nodes, nodes, l_c):
            raise ConfigurationError(
                f"compensation filters must have shape {(nodes, nodes, l_c)}, "
                f"got {filters.shape}"
            )
        filters[np.arange(nodes), np.arange(nodes)] = 0.0

    secondary = np.zeros((nodes, nodes, l_s))
    for m in range(nodes):
        secondary[m, m, :l_self] = _decaying_path(rng, l_self, spec.delay_min, spec.decay)
    for m in range(nodes):
        for k in range(nodes):
            if m != k:
                full = np.convolve(secondary[m, m, :l_self], filters[m, k])
                secondary[m, k, : full.size] = full

    scene = AcousticScene(primary, secondary, fs=fs)
    logger.info(
        "factorable_scene_synthesized",
        nodes=nodes,
        secondary_length=l_s,
        self_length=l_self,
        compensation_length=l_c,
    )
    return FactorableScene(scene=scene, compensation=filters)


def perturb_estimates(
    scene: AcousticScene, mismatch_db: float | None, seed: int
) -> AcousticScene:
    """Replace ŝ by s plus seeded noise at ``mismatch_db`` relative to each path.

    ``None`` or ``-inf`` means no mismatch: the estimates become the true paths.
    """
    if mismatch_db is None or (math.isinf(mismatch_db) and mismatch_db < 0):
        return scene.with_estimates(scene.secondary_true)
    if not math.isfinite(mismatch_db):
        raise ConfigurationError("mismatch_db must be finite or -inf", key="scene.mismatch_db")

    rng = np.random.default_rng(seed)
    ratio = 10.0 ** (mismatch_db / 20.0)
    truth = scene.secondary_true
    estimates = truth.copy()
    for m in range(scene.nodes):
        for k in range(scene.nodes):
            r = rng.standard_normal(scene.secondary_length)
            r /= np.linalg.norm(r)
            estimates[m, k] = truth[m, k] + ratio * np.linalg.norm(truth[m, k]) * r
    return scene.with_estimates(estimates)
