"""Adaptive Control
================
Control-filter update laws of the network: control output, filtered
reference, local gradient, centralized multiple-error FxLMS, distributed
mixed-gradient FxLMS and weight-constrained FxLMS.

Each law exists twice. The per-node functions operate on one
``ControlFilterState`` and mirror the update equations term by term; the
``ControlNetwork`` methods apply the same update to all K nodes at once and
are what the simulation loop calls. Both forms agree to rounding.

The step size lives inside every gradient: ``local_gradient`` returns
``μ·e·x'`` and no update multiplies by μ a second time.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import ArrayLike

from app.services.compensation.compensation_service import (
    align_compensation,
    apply_compensation,
)
from app.services.scene.scene_service import AcousticScene
from app.services.signal.signal_service import (
    FloatArray,
    ImpulseResponse,
    TappedDelayLine,
    fir_step,
)
from app.utils.exceptions import ConfigurationError, ProtocolError
from app.utils.models import GradientFusion

History = TappedDelayLine | FloatArray


def _history(line: History, length: int) -> FloatArray:
    """Most recent ``length`` samples of a delay line or a history array."""
    if isinstance(line, TappedDelayLine):
        if line.capacity < length:
            raise ConfigurationError(
                f"delay line capacity {line.capacity} < filter length {length}"
            )
        return line.window(length)
    hist = np.asarray(line)
    if hist.shape[-1] < length:
        raise ConfigurationError(f"history of {hist.shape[-1]} samples < {length}")
    return hist[..., :length]


@dataclass
class ControlFilterState:
    """One node's control filter, its center point and hyperparameters."""

    w: FloatArray
    w_center: FloatArray
    mu: float
    alpha: float = 0.0

    def __post_init__(self) -> None:
        if self.w.shape != self.w_center.shape or self.w.ndim != 1:
            raise ConfigurationError("control filter and center must be equal-length vectors")
        if not self.mu > 0:
            raise ConfigurationError(f"step size must be > 0, got {self.mu}", key="step_size")
        if self.alpha < 0:
            raise ConfigurationError(f"penalty must be >= 0, got {self.alpha}", key="penalty")

    @classmethod
    def zeros(cls, length: int, mu: float, alpha: float = 0.0) -> ControlFilterState:
        return cls(np.zeros(length), np.zeros(length), mu, alpha)

    @property
    def length(self) -> int:
        return int(self.w.size)


class FilteredReferenceBank:
    """Histories of the filtered references ``x'_km = ŝ_mk * x``.

    With ``cross=True`` every (k, m) pair is kept, as the centralized update
    needs; otherwise only the self pairs (k, k).
    """

    def __init__(self, nodes: int, capacity: int, cross: bool = True) -> None:
        self.nodes = nodes
        self.cross = cross
        lanes = (nodes, nodes) if cross else (nodes,)
        self._line = TappedDelayLine(capacity, lanes)

    @property
    def capacity(self) -> int:
        return self._line.capacity

    def push(self, values: ArrayLike) -> None:
        """Feed one sample per kept pair: shape (K, K) indexed [k, m], or (K,)."""
        self._line.push(values)

    def feed(self, scene: AcousticScene, reference_line: TappedDelayLine) -> None:
        """Compute this sample's filtered references from the scene estimates and push them."""
        length = scene.estimate_length
        if reference_line.capacity < length:
            raise ConfigurationError(
                f"reference line capacity {reference_line.capacity} < "
                f"estimate length {length}"
            )
        x = reference_line.window(length)
        if self.cross:
            # secondary_est is [m, k]; the bank is [k, m]
            self._line.push((scene.secondary_est @ x).T)
        else:
            idx = np.arange(self.nodes)
            self._line.push(scene.secondary_est[idx, idx] @ x)

    def line(self, k: int, m: int) -> FloatArray:
        if not self.cross and k != m:
            raise ConfigurationError(
                f"filtered reference x'_{k + 1}{m + 1} is not kept by this bank"
            )
        window = self._line.window()
        return window[k, m] if self.cross else window[k]

    def self_window(self, length: int) -> FloatArray:
        """(K, length) histories of ``x'_kk``."""
        window = self._line.window(length)
        if self.cross:
            idx = np.arange(self.nodes)
            return window[idx, idx]
        return window

    def cross_window(self, length: int) -> FloatArray:
        """(K, K, length) histories indexed [k, m]."""
        if not self.cross:
            raise ConfigurationError("bank keeps self references only")
        return self._line.window(length)

    def reset(self) -> None:
        self._line.reset()


# ============================================================
# PER-NODE OPERATIONS
# ============================================================


def control_output(state: ControlFilterState, reference_line: TappedDelayLine) -> float:
    """y_k(n) = w_kᵀ x(n)."""
    return float(np.dot(state.w, _history(reference_line, state.length)))


def filtered_reference_step(x_line: TappedDelayLine, s_hat_mk: ImpulseResponse) -> float:
    return fir_step(x_line, s_hat_mk)


def local_gradient(
    state: ControlFilterState, xprime_kk_line: History, e_k: float, taps: int | None = None
) -> FloatArray:
    """μ·e_k·x'_kk(n) over ``taps`` samples (default L_w)."""
    hist = _history(xprime_kk_line, state.length if taps is None else taps)
    return (state.mu * e_k) * hist


def mefxlms_update(
    states: Sequence[ControlFilterState],
    bank: FilteredReferenceBank,
    errors: Sequence[float],
) -> None:
    """w_k ← w_k + μ_k Σ_m x'_km(n) e_m(n)."""
    if len(states) != len(errors) or len(states) != bank.nodes:
        raise ConfigurationError("states, errors and bank disagree on node count")
    increments = []
    for k, state in enumerate(states):
        inc = np.zeros(state.length)
        for m, e_m in enumerate(errors):
            inc += (state.mu * e_m) * _history(bank.line(k, m), state.length)
        increments.append(inc)
    for state, inc in zip(states, increments, strict=True):
        state.w += inc


def mgdfxlms_update(
    state_k: ControlFilterState,
    own_gradient: ArrayLike,
    received: Sequence[tuple[ArrayLike, ImpulseResponse | ArrayLike]],
    fusion: GradientFusion = GradientFusion.TRUNCATED,
) -> None:
    """w_k ← w_k + ∇_k + Σ_{m≠k} ∇_m ⊛ c_mk.

    ``truncated`` convolves each received gradient with c_mk and keeps the
    first L_w taps. ``aligned`` expects gradients over L_w + L_c - 1 taps and
    correlates them with c_mk (see ``align_compensation``).
    """
    length = state_k.length
    own = np.asarray(own_gradient, dtype=np.float64)
    if own.size != length:
        raise ProtocolError(f"own gradient has {own.size} taps, expected {length}")

    fused = np.zeros(length)
    for grad, c_mk in received:
        g = np.asarray(grad, dtype=np.float64)
        c_len = c_mk.length if isinstance(c_mk, ImpulseResponse) else np.size(c_mk)
        if fusion is GradientFusion.ALIGNED:
            if g.size != length + c_len - 1:
                raise ProtocolError(
                    f"received gradient has {g.size} taps, expected {length + c_len - 1}"
                )
            fused += align_compensation(g, c_mk, length)
        else:
            if g.size != length:
                raise ProtocolError(
                    f"received gradient has {g.size} taps, expected {length}"
                )
            fused += apply_compensation(g, c_mk)
    state_k.w += own + fused


def _check_contraction(mu: float, alpha: float) -> None:
    if mu * alpha >= 1:
        raise ConfigurationError(
            f"step_size * penalty = {mu * alpha:g} must be < 1", key="penalty"
        )


def wcfxlms_update(state: ControlFilterState, xprime_kk_line: History, e_k: float) -> None:
    """w ← w + μ x'_kk e + μα (w̃ - w)."""
    _check_contraction(state.mu, state.alpha)
    g = local_gradient(state, xprime_kk_line, e_k)
    state.w += g + (state.mu * state.alpha) * (state.w_center - state.w)


def cost(e_k: float, state: ControlFilterState) -> float:
    """Instantaneous e² + α‖w̃ - w‖²; diagnostic only."""
    diff = state.w_center - state.w
    return float(e_k * e_k + state.alpha * np.dot(diff, diff))


# ============================================================
# NODE-STACKED NETWORK
# ============================================================


class ControlNetwork:
    """All K control filters and centers as (K, L_w) arrays.

    ``states[k]`` views row k, so per-node operations and batched updates
    act on the same memory.
    """

    def __init__(
        self, nodes: int, length: int, step_sizes: Sequence[float], penalties: Sequence[float]
    ) -> None:
        if len(step_sizes) != nodes or len(penalties) != nodes:
            raise ConfigurationError("step sizes and penalties need one value per node")
        self.nodes = nodes
        self.length = length
        self.weights = np.zeros((nodes, length))
        self.centers = np.zeros((nodes, length))
        self.mu = np.asarray(step_sizes, dtype=np.float64)
        self.alpha = np.asarray(penalties, dtype=np.float64)
        self.states = [
            ControlFilterState(self.weights[k], self.centers[k], float(mu), float(alpha))
            for k, (mu, alpha) in enumerate(zip(self.mu, self.alpha, strict=True))
        ]

    def outputs(self, reference_line: TappedDelayLine) -> FloatArray:
        return self.weights @ _history(reference_line, self.length)

    def gradients(self, errors: FloatArray, self_history: FloatArray) -> FloatArray:
        """(K, taps) local gradients μ_k e_k x'_kk from (K, taps) histories."""
        return (self.mu * errors)[:, None] * self_history

    def apply_fxlms(self, gradients: FloatArray) -> None:
        self.weights += gradients

    def apply_wcfxlms(self, gradients: FloatArray) -> None:
        for mu, alpha in zip(self.mu, self.alpha, strict=True):
            _check_contraction(float(mu), float(alpha))
        self.weights += gradients + (self.mu * self.alpha)[:, None] * (
            self.centers - self.weights
        )

    def apply_mefxlms(self, errors: FloatArray, cross_history: FloatArray) -> None:
        """``cross_history`` is (K, K, L_w) indexed [k, m]."""
        coef = self.mu[:, None] * errors[None, :]
        self.weights += np.einsum("kml,km->kl", cross_history, coef)

    def apply_mgdfxlms(
        self, gradients: FloatArray, kernel: FloatArray, fusion: GradientFusion
    ) -> None:
        """Own plus compensated remote gradients for every node.

        ``gradients`` is (K, L_w) for ``truncated`` and (K, L_w + L_c - 1)
        for ``aligned``; ``kernel[m, k]`` is c_mk with a zero diagonal.
        """
        own = gradients[:, : self.length]
        if self.nodes == 1:
            self.weights += own
            return
        l_c = kernel.shape[2]
        if fusion is GradientFusion.ALIGNED:
            if gradients.shape[1] != self.length + l_c - 1:
                raise ProtocolError("aligned fusion needs gradients over L_w + L_c - 1 taps")
            windows = sliding_window_view(gradients, l_c, axis=1)
            fused = np.tensordot(kernel, windows, axes=([0, 2], [0, 2]))
        else:
            padded = np.zeros((self.nodes, self.length + l_c - 1))
            padded[:, l_c - 1 :] = own
            windows = sliding_window_view(padded, l_c, axis=1)
            fused = np.tensordot(kernel[:, :, ::-1], windows, axes=([0, 2], [0, 2]))
        self.weights += own + fused

    def weight_differences(self) -> FloatArray:
        return self.weights - self.centers

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.weights)))

    def reset(self) -> None:
        self.weights[...] = 0.0
        self.centers[...] = 0.0
