"""Compensation service package."""

from .compensation_repository import CompensationRepository
from .compensation_service import (
    CompensationService,
    CompensationSet,
    align_compensation,
    apply_compensation,
    estimate_compensation,
)

__all__ = [
    "CompensationRepository",
    "CompensationService",
    "CompensationSet",
    "align_compensation",
    "apply_compensation",
    "estimate_compensation",
]
