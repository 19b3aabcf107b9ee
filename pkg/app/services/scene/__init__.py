"""Scene service package."""

from .scene_repository import SceneRepository
from .scene_service import (
    AcousticScene,
    FactorableScene,
    disturbance,
    factorable_scene,
    perturb_estimates,
    residual_error,
    synthesize_scene,
)

__all__ = [
    "AcousticScene",
    "FactorableScene",
    "SceneRepository",
    "disturbance",
    "factorable_scene",
    "perturb_estimates",
    "residual_error",
    "synthesize_scene",
]
