"""Compensation Filters
====================
Offline least-squares fit of the K(K-1) compensation filters that map each
node's self-path estimate onto its cross-path estimates
(``ŝ_mk ≈ ŝ_mm * c_mk``), plus the two operators that apply a fitted filter
to a tap vector exchanged between nodes.
"""

from __future__ import annotations

from collections.abc import Iterator
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
import structlog
from numpy.typing import ArrayLike
from scipy import linalg

from app.services.scene.scene_repository import SceneRepository
from app.services.scene.scene_service import AcousticScene
from app.services.signal.signal_service import FloatArray, ImpulseResponse
from app.utils.exceptions import (
    ConfigurationError,
    InputError,
    ProtocolError,
    SingularSystemError,
)

if TYPE_CHECKING:
    from app.services.compensation.compensation_repository import (
        CompensationRepository,
    )

logger = structlog.get_logger(__name__)

# relative Tikhonov weight against the zero-lag autocorrelation of ŝ_mm
REGULARIZATION = 1e-10
REFINEMENT_SWEEPS = 2

Pair = tuple[int, int]


@dataclass(frozen=True)
class CompensationSet:
    nodes: int
    length: int
    filters: dict[Pair, ImpulseResponse]
    residuals: dict[Pair, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.length < 1:
            raise ConfigurationError("compensation length must be >= 1")
        expected = {(m, k) for m in range(self.nodes) for k in range(self.nodes) if m != k}
        if set(self.filters) != expected:
            raise InputError(
                f"compensation set for {self.nodes} nodes needs exactly "
                f"{len(expected)} filters, got {len(self.filters)}"
            )
        for pair, h in self.filters.items():
            if h.length != self.length:
                raise InputError(
                    f"filter c_{pair[0] + 1}{pair[1] + 1} has {h.length} taps, "
                    f"expected {self.length}"
                )

    @classmethod
    def from_kernel(
        cls, kernel: ArrayLike, residuals: ArrayLike | None = None
    ) -> CompensationSet:
        """Build from a ``(K, K, L_c)`` array; the diagonal is ignored."""
        arr = np.asarray(kernel, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[0] != arr.shape[1]:
            raise InputError(f"compensation kernel must be (K, K, L_c), got {arr.shape}")
        nodes, _, length = arr.shape
        res = None if residuals is None else np.asarray(residuals, dtype=np.float64)
        filters = {}
        fits = {}
        for m, k in _pairs(nodes):
            filters[(m, k)] = ImpulseResponse(arr[m, k])
            if res is not None:
                fits[(m, k)] = float(res[m, k])
        return cls(nodes=nodes, length=length, filters=filters, residuals=fits)

    @classmethod
    def identity(cls, nodes: int, length: int = 1) -> CompensationSet:
        kernel = np.zeros((nodes, nodes, length))
        kernel[:, :, 0] = 1.0
        return cls.from_kernel(kernel)

    def filter(self, m: int, k: int) -> ImpulseResponse:
        try:
            return self.filters[(m, k)]
        except KeyError:
            raise ProtocolError(f"no compensation filter c_{m + 1}{k + 1}")

    def kernel(self) -> FloatArray:
        """``(K, K, L_c)`` array with ``kernel[m, k] = c_mk`` and a zero diagonal."""
        out = np.zeros((self.nodes, self.nodes, self.length))
        for (m, k), h in self.filters.items():
            out[m, k] = h.taps
        return out

    def residual_matrix(self) -> FloatArray:
        out = np.zeros((self.nodes, self.nodes))
        for (m, k), r in self.residuals.items():
            out[m, k] = r
        return out


def _pairs(nodes: int) -> Iterator[Pair]:
    for m in range(nodes):
        for k in range(nodes):
            if m != k:
                yield m, k


def _padded(taps: FloatArray, length: int) -> FloatArray:
    out = np.zeros(length)
    out[: taps.size] = taps
    return out


def fit_residual(s_mm: FloatArray, s_mk: FloatArray, c: FloatArray) -> float:
    """‖ŝ_mk - ŝ_mm * c‖₂ over the longer of the two supports."""
    model = np.convolve(s_mm, c)
    n = max(model.size, s_mk.size)
    return float(np.linalg.norm(_padded(s_mk, n) - _padded(model, n)))


def estimate_compensation(scene: AcousticScene, length: int) -> CompensationSet:
    """Least-squares compensation filters from the secondary path estimates."""
    if length < 1:
        raise ConfigurationError(
            f"compensation length must be >= 1, got {length}", key="compensation.length"
        )
    nodes = scene.nodes
    est = scene.secondary_est
    rows = est.shape[2] + length - 1

    filters: dict[Pair, ImpulseResponse] = {}
    residuals: dict[Pair, float] = {}
    for m in range(nodes):
        s_mm = est[m, m]
        if nodes > 1 and not np.any(s_mm):
            raise SingularSystemError((m, (m + 1) % nodes))

        a = linalg.convolution_matrix(s_mm, length, mode="full")
        r = a.T @ a
        lam = REGULARIZATION * r[0, 0]
        factor = linalg.cho_factor(r + lam * np.eye(length))

        for k in range(nodes):
            if k == m:
                continue
            s_mk = est[m, k]
            b = a.T @ _padded(s_mk, rows)
            c = linalg.cho_solve(factor, b)
            for _ in range(REFINEMENT_SWEEPS):
                c = c + linalg.cho_solve(factor, b - r @ c)
            if not np.all(np.isfinite(c)):
                raise InputError(f"fit of c_{m + 1}{k + 1} produced non-finite taps")

            filters[(m, k)] = ImpulseResponse(c)
            residuals[(m, k)] = fit_residual(s_mm, s_mk, c)
            logger.debug(
                "compensation_fitted", pair=(m + 1, k + 1), residual=residuals[(m, k)]
            )

    worst = max(residuals.values(), default=0.0)
    logger.info("compensation_estimated", nodes=nodes, length=length, worst_residual=worst)
    return CompensationSet(nodes=nodes, length=length, filters=filters, residuals=residuals)


# ============================================================
# FUSION OPERATORS
# ============================================================


def _taps(c: ImpulseResponse | ArrayLike) -> FloatArray:
    return c.taps if isinstance(c, ImpulseResponse) else np.asarray(c, dtype=np.float64)


def apply_compensation(vec: ArrayLike, c_mk: ImpulseResponse | ArrayLike) -> FloatArray:
    """First ``len(vec)`` taps of ``vec * c_mk``."""
    v = np.asarray(vec, dtype=np.float64)
    return np.convolve(v, _taps(c_mk))[: v.size]


def align_compensation(
    ext_vec: ArrayLike, c_mk: ImpulseResponse | ArrayLike, length: int
) -> FloatArray:
    """``out[i] = Σ_j c_mk[j] · ext_vec[i + j]`` for ``i < length``.

    ``ext_vec`` is a most-recent-first gradient over ``length + L_c - 1``
    taps. With exact compensation this equals the gradient the receiver
    would form from its own cross filtered reference.
    """
    ext = np.asarray(ext_vec, dtype=np.float64)
    c = _taps(c_mk)
    if ext.size < length + c.size - 1:
        raise ProtocolError(
            f"extended gradient has {ext.size} taps, needs {length + c.size - 1}"
        )
    return np.correlate(ext[: length + c.size - 1], c, mode="valid")


class CompensationService:
    """Offline training of compensation sets from stored scenes."""

    def __init__(
        self, repository: CompensationRepository, scenes: SceneRepository
    ) -> None:
        self.repository = repository
        self.scenes = scenes

    def train(
        self, scene_path: Path, length: int, out_path: Path
    ) -> tuple[CompensationSet, Path]:
        scene = self.scenes.load(scene_path)
        comp = estimate_compensation(scene, length)
        return comp, self.repository.save(out_path, comp)
