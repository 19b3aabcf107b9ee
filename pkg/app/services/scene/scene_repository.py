"""Scene Repository
================
Stores and loads acoustic scenes as float64 tap archives. Externally measured
paths are imported through the same format; round trips are bit-exact.
"""

from pathlib import Path

from app.services.scene.scene_service import AcousticScene
from app.utils.archive import read_archive, write_archive
from app.utils.exceptions import InputError
from app.utils.models import SceneManifest

_ARRAYS = ("primary", "secondary_true", "secondary_est")


class SceneRepository:
    def save(self, path: Path, scene: AcousticScene, description: str = "") -> Path:
        manifest = SceneManifest(
            nodes=scene.nodes,
            primary_length=scene.primary_length,
            secondary_length=scene.secondary_length,
            estimate_length=scene.estimate_length,
            fs=scene.fs,
            description=description,
        )
        return write_archive(
            path,
            manifest,
            {
                "primary": scene.primary,
                "secondary_true": scene.secondary_true,
                "secondary_est": scene.secondary_est,
            },
        )

    def load(self, path: Path) -> AcousticScene:
        manifest, arrays = read_archive(path, SceneManifest, _ARRAYS)
        expected = {
            "primary": (manifest.nodes, manifest.primary_length),
            "secondary_true": (manifest.nodes, manifest.nodes, manifest.secondary_length),
            "secondary_est": (manifest.nodes, manifest.nodes, manifest.estimate_length),
        }
        for name, shape in expected.items():
            if arrays[name].shape != shape:
                raise InputError(
                    f"{path}: {name} has shape {arrays[name].shape}, manifest says {shape}"
                )
        return AcousticScene(
            arrays["primary"],
            arrays["secondary_true"],
            arrays["secondary_est"],
            manifest.fs,
        )

    def describe(self, path: Path) -> SceneManifest:
        manifest, _ = read_archive(path, SceneManifest, ())
        return manifest
