"""Simulation service package."""

from .simulation_repository import RunArtifacts, SimulationRepository, apply_override
from .simulation_service import (
    RunLog,
    RunSummary,
    SimulationService,
    StageAudit,
    run_scenario,
)

__all__ = [
    "RunArtifacts",
    "RunLog",
    "RunSummary",
    "SimulationRepository",
    "SimulationService",
    "StageAudit",
    "apply_override",
    "run_scenario",
]
