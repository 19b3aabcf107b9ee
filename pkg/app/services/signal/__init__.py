"""Signal service package."""

from .signal_repository import SignalRepository
from .signal_service import (
    ImpulseResponse,
    NoiseSource,
    TappedDelayLine,
    convolve_full,
    fir_step,
    next_sample,
)

__all__ = [
    "ImpulseResponse",
    "NoiseSource",
    "SignalRepository",
    "TappedDelayLine",
    "convolve_full",
    "fir_step",
    "next_sample",
]
