"""Control service package."""

from .control_repository import ControlRepository, WeightSnapshot
from .control_service import (
    ControlFilterState,
    ControlNetwork,
    FilteredReferenceBank,
    control_output,
    cost,
    filtered_reference_step,
    local_gradient,
    mefxlms_update,
    mgdfxlms_update,
    wcfxlms_update,
)

__all__ = [
    "ControlFilterState",
    "ControlNetwork",
    "ControlRepository",
    "FilteredReferenceBank",
    "WeightSnapshot",
    "control_output",
    "cost",
    "filtered_reference_step",
    "local_gradient",
    "mefxlms_update",
    "mgdfxlms_update",
    "wcfxlms_update",
]
