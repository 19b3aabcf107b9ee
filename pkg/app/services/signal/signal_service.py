"""Signal Core
===========
Streaming DSP primitives used by every other service: FIR impulse
responses, most-recent-first tapped delay lines, per-sample FIR evaluation
and deterministic primary noise sources.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import signal

from app.utils.exceptions import ConfigurationError, InputError, StreamExhaustedError
from app.utils.models import ExhaustPolicy, NoiseKind, NoiseSourceSpec

FloatArray = NDArray[np.float64]


class ImpulseResponse:
    """Finite FIR tap vector; immutable once built."""

    __slots__ = ("_taps",)

    def __init__(self, taps: ArrayLike) -> None:
        arr = np.array(taps, dtype=np.float64).reshape(-1)
        if arr.size < 1:
            raise InputError("impulse response needs at least one tap")
        if not np.all(np.isfinite(arr)):
            raise InputError("impulse response taps must be finite")
        arr.setflags(write=False)
        self._taps = arr

    @classmethod
    def unit_impulse(cls, length: int = 1, delay: int = 0) -> ImpulseResponse:
        if not 0 <= delay < length:
            raise ConfigurationError(f"delay {delay} outside a {length}-tap filter")
        taps = np.zeros(length)
        taps[delay] = 1.0
        return cls(taps)

    @property
    def taps(self) -> FloatArray:
        return self._taps

    @property
    def length(self) -> int:
        return int(self._taps.size)

    def __len__(self) -> int:
        return self.length

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ImpulseResponse):
            return NotImplemented
        return bool(np.array_equal(self._taps, other._taps))

    def __hash__(self) -> int:
        return hash(self._taps.tobytes())

    def __repr__(self) -> str:
        return f"ImpulseResponse(length={self.length})"


class TappedDelayLine:
    """Most-recent-first sample history; index ``i`` is the sample ``i`` steps ago.

    A line may carry parallel ``lanes`` (for example one per node) that are
    pushed together. Storage is a doubled buffer so every read is a
    contiguous view and a push is amortised O(1).
    """

    def __init__(self, capacity: int, lanes: tuple[int, ...] = ()) -> None:
        if capacity < 1:
            raise ConfigurationError(f"delay line capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.lanes = tuple(lanes)
        self._buffer = np.zeros((*self.lanes, 2 * capacity))
        self._head = capacity

    def push(self, sample: ArrayLike) -> None:
        if self._head == 0:
            cap = self.capacity
            self._buffer[..., cap + 1 :] = self._buffer[..., : cap - 1]
            self._head = cap
        else:
            self._head -= 1
        self._buffer[..., self._head] = sample

    def window(self, length: int | None = None) -> FloatArray:
        """Read-only view of the ``length`` most recent samples per lane."""
        n = self.capacity if length is None else length
        if n > self.capacity:
            raise ConfigurationError(
                f"read of {n} samples from a line of capacity {self.capacity}"
            )
        view = self._buffer[..., self._head : self._head + n]
        view.flags.writeable = False
        return view

    def __getitem__(self, i: int) -> float | FloatArray:
        if not 0 <= i < self.capacity:
            raise ConfigurationError(
                f"index {i} outside delay line of capacity {self.capacity}"
            )
        value = self._buffer[..., self._head + i]
        return float(value) if not self.lanes else value.copy()

    def reset(self) -> None:
        self._buffer[...] = 0.0
        self._head = self.capacity


def _require_capacity(line: TappedDelayLine, length: int) -> None:
    if line.capacity < length:
        raise ConfigurationError(
            f"delay line capacity {line.capacity} < filter length {length}"
        )


def fir_step(line: TappedDelayLine, h: ImpulseResponse) -> float:
    """One output sample of ``h * x`` from the line's history; the line is untouched."""
    _require_capacity(line, h.length)
    return float(np.dot(h.taps, line.window(h.length)))


def convolve_full(a: ImpulseResponse, b: ImpulseResponse) -> ImpulseResponse:
    return ImpulseResponse(np.convolve(a.taps, b.taps))


# ============================================================
# NOISE SOURCES
# ============================================================


def bandpass_taps(spec: NoiseSourceSpec, fs: float) -> FloatArray:
    """Unit-energy linear-phase windowed-sinc bandpass."""
    low, high = spec.band
    if high >= fs / 2:
        raise ConfigurationError(
            f"band edge {high} Hz is not below Nyquist ({fs / 2} Hz)", key="noise.band"
        )
    taps = signal.firwin(
        spec.fir_taps, [low, high], pass_zero=False, window="blackman", fs=fs
    )
    return taps / np.linalg.norm(taps)


class NoiseSource:
    """Deterministic primary noise stream.

    Samples are produced in fixed blocks so the stream does not depend on
    whether it is read one sample at a time or in bulk.
    """

    BLOCK_SIZE = 4096

    def __init__(
        self,
        spec: NoiseSourceSpec,
        fs: float,
        seed: int | None = None,
        recording: FloatArray | None = None,
    ) -> None:
        self.spec = spec
        self.fs = fs
        self.seed = spec.seed if seed is None else seed
        self._emitted = 0
        self._block: FloatArray = np.empty(0)
        self._cursor = 0

        if spec.kind is NoiseKind.BANDPASS_WHITE:
            self._taps = bandpass_taps(spec, fs)
            self._zi = np.zeros(self._taps.size - 1)
            self._rng = np.random.default_rng(self.seed if self.seed is not None else 0)
        elif spec.kind is NoiseKind.FILE_STREAM:
            if recording is None:
                raise ConfigurationError(
                    "file-stream source needs an opened signal file", key="noise.path"
                )
            if recording.size == 0:
                raise InputError(f"signal file {spec.path} holds no samples")
            self._recording = np.asarray(recording, dtype=np.float64)
            self._file_cursor = 0

    @property
    def emitted(self) -> int:
        return self._emitted

    def next_sample(self) -> float:
        if self._cursor >= self._block.size:
            self._block = self._next_block()
            self._cursor = 0
        value = self._block[self._cursor]
        self._cursor += 1
        self._emitted += 1
        return float(value)

    def take(self, n: int) -> FloatArray:
        return np.array([self.next_sample() for _ in range(n)])

    def _next_block(self) -> FloatArray:
        kind = self.spec.kind
        if kind is NoiseKind.BANDPASS_WHITE:
            white = self._rng.standard_normal(self.BLOCK_SIZE)
            out, self._zi = signal.lfilter(self._taps, 1.0, white, zi=self._zi)
            return self.spec.amplitude * out
        if kind is NoiseKind.TONAL_MIXTURE:
            return self._tone_block()
        return self._file_block()

    def _tone_block(self) -> FloatArray:
        start = self._emitted
        n = np.arange(start, start + self.BLOCK_SIZE, dtype=np.float64)
        block = np.zeros(self.BLOCK_SIZE)
        for tone in self.spec.tones:
            # wrap the phase increment per period to keep precision on long runs
            cycles = np.mod(tone.frequency * n / self.fs, 1.0)
            block += tone.amplitude * np.sin(2 * math.pi * cycles + tone.phase)
        return self.spec.amplitude * block

    def _file_block(self) -> FloatArray:
        remaining = self._recording.size - self._file_cursor
        if remaining <= 0:
            if self.spec.on_exhausted is ExhaustPolicy.STOP:
                raise StreamExhaustedError(
                    f"signal file exhausted after {self._emitted} samples"
                )
            self._file_cursor = 0
            remaining = self._recording.size
        n = min(self.BLOCK_SIZE, remaining)
        block = self._recording[self._file_cursor : self._file_cursor + n]
        self._file_cursor += n
        return self.spec.amplitude * block


def next_sample(src: NoiseSource) -> float:
    return src.next_sample()
