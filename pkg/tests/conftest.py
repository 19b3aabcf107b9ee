"""Shared fixtures: small scenes and run configs that simulate in well under a second."""

from collections.abc import Callable
from copy import deepcopy
from typing import Any

import numpy as np
import pytest
import structlog

from app.services.scene.scene_service import (
    AcousticScene,
    FactorableScene,
    factorable_scene,
    synthesize_scene,
)
from app.utils.models import PathSynthesisSpec, SimConfig

@pytest.fixture(autouse=True)
def _reset_structlog() -> Any:
    """Undo CLI logging config so later tests don't write to a closed capture stream."""
    yield
    structlog.reset_defaults()


SMALL_SYNTHESIS: dict[str, Any] = {
    "length": 16,
    "delay_min": 1,
    "delay_max": 4,
    "decay": 4.0,
    "cross_attenuation": 0.5,
    "primary_length": 24,
    "primary_delay_min": 6,
    "primary_delay_max": 10,
}

SMALL_RUN: dict[str, Any] = {
    "name": "small",
    "seed": 5,
    "nodes": 3,
    "filter_length": 16,
    "fs": 8000.0,
    "duration": 0.25,
    "algorithm": "ACDMCANC",
    "step_size": 1e-3,
    "penalty": 10.0,
    "anse_window": 200,
    "scene": {"synthesis": SMALL_SYNTHESIS},
    "compensation": {"length": 5},
    "noise": {"band": [100.0, 1000.0]},
    "trigger": {"period": 0.01},
    "output": {"write_spectrum": False},
}


def _merge(base: dict[str, Any], updates: dict[str, Any]) -> dict[str, Any]:
    out = deepcopy(base)
    for key, value in updates.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


@pytest.fixture
def small_spec() -> PathSynthesisSpec:
    return PathSynthesisSpec(**SMALL_SYNTHESIS)


@pytest.fixture
def make_config() -> Callable[..., SimConfig]:
    """Build a validated small run config; nested dicts are merged into the defaults."""

    def factory(**updates: Any) -> SimConfig:
        return SimConfig.model_validate(_merge(SMALL_RUN, updates))

    return factory


@pytest.fixture
def scene3(small_spec: PathSynthesisSpec) -> AcousticScene:
    return synthesize_scene(small_spec, nodes=3, fs=8000.0, seed=5)


@pytest.fixture
def factorable3() -> FactorableScene:
    spec = PathSynthesisSpec(
        length=14,
        delay_min=1,
        delay_max=3,
        decay=3.0,
        primary_length=20,
        primary_delay_min=6,
        primary_delay_max=8,
    )
    return factorable_scene(spec, nodes=3, compensation_length=4, fs=8000.0, seed=11)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
