"""Dependency Wiring
=================
Builds repositories and services, and resolves what a run config refers
to: its noise source, its acoustic scene (synthesized, factorable or loaded
from an archive, with estimate mismatch applied) and its compensation set.
"""

from app.services.compensation.compensation_repository import CompensationRepository
from app.services.compensation.compensation_service import (
    CompensationService,
    CompensationSet,
    estimate_compensation,
)
from app.services.scene.scene_repository import SceneRepository
from app.services.scene.scene_service import (
    AcousticScene,
    factorable_scene,
    perturb_estimates,
    synthesize_scene,
)
from app.services.signal.signal_repository import SignalRepository
from app.services.signal.signal_service import NoiseSource
from app.services.simulation.simulation_repository import SimulationRepository
from app.services.simulation.simulation_service import SimulationService
from app.utils.exceptions import ConfigurationError
from app.utils.models import NoiseKind, SceneSource, SimConfig


def get_signal_repository() -> SignalRepository:
    return SignalRepository()


def get_scene_repository() -> SceneRepository:
    return SceneRepository()


def get_compensation_repository() -> CompensationRepository:
    return CompensationRepository()


def get_compensation_service() -> CompensationService:
    return CompensationService(get_compensation_repository(), get_scene_repository())


def get_simulation_repository() -> SimulationRepository:
    return SimulationRepository()


def get_simulation_service() -> SimulationService:
    return SimulationService(get_simulation_repository())


def build_noise_source(config: SimConfig) -> NoiseSource:
    recording = None
    if config.noise.kind is NoiseKind.FILE_STREAM and config.noise.path is not None:
        recording = get_signal_repository().load_wav(config.noise.path, config.fs)
    return NoiseSource(config.noise, config.fs, seed=config.noise_seed, recording=recording)


def resolve_scene(config: SimConfig) -> AcousticScene:
    settings = config.scene
    if settings.source is SceneSource.FILE:
        if settings.path is None:
            raise ConfigurationError("scene source 'file' needs a path", key="scene.path")
        scene = get_scene_repository().load(settings.path)
        if scene.nodes != config.nodes:
            raise ConfigurationError(
                f"scene archive has {scene.nodes} nodes, config asks for {config.nodes}",
                key="nodes",
            )
        if scene.fs != config.fs:
            raise ConfigurationError(
                f"scene archive is at {scene.fs:g} Hz, config runs at {config.fs:g} Hz",
                key="fs",
            )
    elif settings.source is SceneSource.FACTORABLE:
        scene = factorable_scene(
            settings.synthesis,
            config.nodes,
            config.compensation.length,
            fs=config.fs,
            self_length=settings.self_length,
            seed=config.scene_seed,
        ).scene
    else:
        scene = synthesize_scene(
            settings.synthesis, config.nodes, fs=config.fs, seed=config.scene_seed
        )

    if settings.has_mismatch:
        scene = perturb_estimates(scene, settings.mismatch_db, config.mismatch_seed)
    return scene


def resolve_compensation(config: SimConfig, scene: AcousticScene) -> CompensationSet:
    path = config.compensation.path
    if path is None:
        return estimate_compensation(scene, config.compensation.length)
    comp = get_compensation_repository().load(path)
    if comp.nodes != scene.nodes:
        raise ConfigurationError(
            f"compensation set has {comp.nodes} nodes, scene has {scene.nodes}",
            key="compensation.path",
        )
    return comp
