"""Evaluation Metrics
==================
Average normalized squared error (ANSE) over trailing windows and
averaged-periodogram power spectra of run signals.

Spectrum convention: Hann-windowed 4096-sample segments with 50 % overlap,
no detrending, one-sided, power-spectrum scaling. A unit-amplitude sinusoid
centred on a bin reads its mean square, -3.01 dB. Powers are floored at
1e-20 (-200 dB).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy import signal

from app.services.signal.signal_service import FloatArray
from app.utils.exceptions import NotReadyError

ANSE_WINDOW = 5000
SPECTRUM_NFFT = 4096
POWER_FLOOR = 1e-20

SPECTRUM_CONVENTION = (
    "welch hann nperseg=4096 noverlap=2048 one-sided scaling=spectrum; "
    "unit sine on a bin center reads -3.01 dB; floor 1e-20 (-200 dB)"
)


class SignalLog(Protocol):
    """Anything carrying (samples, K) error and disturbance histories."""

    @property
    def errors(self) -> FloatArray: ...

    @property
    def disturbances(self) -> FloatArray: ...


def _as_matrix(values: FloatArray) -> FloatArray:
    arr = np.asarray(values, dtype=np.float64)
    return arr[:, None] if arr.ndim == 1 else arr


def anse(log: SignalLog, n: int, n_avg: int = ANSE_WINDOW) -> float:
    """ANSE in dB over samples ``n - n_avg`` … ``n - 1``.

    Returns NaN when any node saw zero disturbance power in the window.
    """
    if n < n_avg:
        raise NotReadyError(f"ANSE needs {n_avg} samples, only {n} available")
    e = _as_matrix(log.errors)[n - n_avg : n]
    d = _as_matrix(log.disturbances)[n - n_avg : n]
    e_pow = np.mean(e * e, axis=0)
    d_pow = np.mean(d * d, axis=0)
    if np.any(d_pow == 0):
        return float("nan")
    return float(np.mean(10.0 * np.log10(np.maximum(e_pow, POWER_FLOOR) / d_pow)))


def _window_mean(x: FloatArray, n: int) -> FloatArray:
    """Trailing ``n``-sample means of ``x`` along axis 0, one per complete window.

    Each window sum is the tail of one ``n``-block plus the head of the next,
    so a large early value never enters later sums through a running total.
    """
    samples, width = x.shape
    blocks = -(-samples // n)
    padded = np.zeros((blocks * n, width))
    padded[:samples] = x
    tiles = padded.reshape(blocks, n, width)
    head = np.cumsum(tiles, axis=1)
    rest = np.cumsum(tiles[:, ::-1], axis=1)[:, ::-1]
    # tail[b, j] sums block b from j + 1 to its end
    tail = np.zeros_like(rest)
    tail[:, :-1] = rest[:, 1:]
    carried = np.zeros_like(tail)
    carried[1:] = tail[:-1]
    sums = (head + carried).reshape(blocks * n, width)
    return sums[n - 1 : samples] / n


def anse_series(errors: FloatArray, disturbances: FloatArray, n_avg: int = ANSE_WINDOW) -> FloatArray:
    """Full-rate ANSE; entry ``i`` equals ``anse(log, i + 1, n_avg)``, NaN during warm-up."""
    e = _as_matrix(errors)
    d = _as_matrix(disturbances)
    samples = e.shape[0]
    out = np.full(samples, np.nan)
    if samples < n_avg:
        return out

    e_pow = _window_mean(e * e, n_avg)
    d_pow = _window_mean(d * d, n_avg)
    defined = np.all(d_pow > 0, axis=1)
    ratio = np.ones_like(e_pow)
    ratio[defined] = np.maximum(e_pow[defined], POWER_FLOOR) / d_pow[defined]
    values = np.mean(10.0 * np.log10(ratio), axis=1)
    values[~defined] = np.nan
    out[n_avg - 1 :] = values
    return out


@dataclass(frozen=True)
class SpectrumEstimate:
    frequencies: FloatArray
    power: FloatArray

    @property
    def power_db(self) -> FloatArray:
        return 10.0 * np.log10(np.maximum(self.power, POWER_FLOOR))

    def as_pairs(self) -> list[tuple[float, float]]:
        return list(zip(self.frequencies.tolist(), self.power_db.tolist(), strict=True))


def power_spectrum(segment: FloatArray, fs: float, nfft: int = SPECTRUM_NFFT) -> SpectrumEstimate:
    """Averaged periodogram of one segment; linear power per bin."""
    x = np.asarray(segment, dtype=np.float64)
    if x.size < nfft:
        raise NotReadyError(f"spectrum needs {nfft} samples, segment has {x.size}")
    freqs, power = signal.welch(
        x,
        fs=fs,
        window="hann",
        nperseg=nfft,
        noverlap=nfft // 2,
        detrend=False,
        return_onesided=True,
        scaling="spectrum",
    )
    return SpectrumEstimate(frequencies=freqs, power=power)


@dataclass(frozen=True)
class SpectrumTable:
    """Per-node error spectra plus node means of error and disturbance power."""

    frequencies: FloatArray
    columns: dict[str, FloatArray]


def spectrum_table(
    errors: FloatArray, disturbances: FloatArray, fs: float, nfft: int = SPECTRUM_NFFT
) -> SpectrumTable:
    e = _as_matrix(errors)
    d = _as_matrix(disturbances)
    error_specs = [power_spectrum(e[:, k], fs, nfft) for k in range(e.shape[1])]
    dist_power = np.mean([power_spectrum(d[:, k], fs, nfft).power for k in range(d.shape[1])], axis=0)

    columns = {f"error_{k + 1}_db": spec.power_db for k, spec in enumerate(error_specs)}
    mean_error = SpectrumEstimate(
        error_specs[0].frequencies, np.mean([s.power for s in error_specs], axis=0)
    )
    columns["error_mean_db"] = mean_error.power_db
    columns["disturbance_mean_db"] = SpectrumEstimate(mean_error.frequencies, dist_power).power_db
    return SpectrumTable(frequencies=mean_error.frequencies, columns=columns)
