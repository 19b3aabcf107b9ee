"""Signal Repository
=================
Reads and writes mono WAV recordings used as file-stream noise sources.
PCM16 and float32 are supported; no resampling is performed.
"""

from pathlib import Path

import numpy as np
from scipy.io import wavfile

from app.services.signal.signal_service import FloatArray
from app.utils.exceptions import InputError


class SignalRepository:
    def load_wav(self, path: Path, fs: float) -> FloatArray:
        try:
            rate, data = wavfile.read(path)
        except (OSError, ValueError) as e:
            raise InputError(f"cannot read WAV file {path}: {e}")

        if rate != fs:
            raise InputError(
                f"{path} is sampled at {rate} Hz but the run uses {fs:g} Hz",
                code="SAMPLE_RATE_MISMATCH",
            )
        if data.ndim != 1:
            raise InputError(f"{path} has {data.shape[1]} channels; mono required")

        if data.dtype == np.int16:
            return data.astype(np.float64) / 32768.0
        if data.dtype == np.float32:
            return data.astype(np.float64)
        raise InputError(f"{path} uses unsupported sample format {data.dtype}")

    def save_wav(self, path: Path, samples: FloatArray, fs: int) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        wavfile.write(path, fs, np.asarray(samples, dtype=np.float32))
        return path
