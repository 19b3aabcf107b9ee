"""Metrics service package."""

from .metrics_service import (
    SpectrumEstimate,
    SpectrumTable,
    anse,
    anse_series,
    power_spectrum,
    spectrum_table,
)

__all__ = [
    "SpectrumEstimate",
    "SpectrumTable",
    "anse",
    "anse_series",
    "power_spectrum",
    "spectrum_table",
]
