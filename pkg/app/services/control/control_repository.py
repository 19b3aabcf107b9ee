"""Control Repository
==================
Exports final control filters and center points as weight snapshots for
post-hoc analysis, and reads them back.
"""

from dataclasses import dataclass
from pathlib import Path

from app.services.signal.signal_service import FloatArray
from app.utils.archive import read_archive, write_archive
from app.utils.exceptions import InputError
from app.utils.models import WeightSnapshotManifest


@dataclass(frozen=True)
class WeightSnapshot:
    manifest: WeightSnapshotManifest
    weights: FloatArray
    centers: FloatArray


class ControlRepository:
    def save(
        self,
        path: Path,
        manifest: WeightSnapshotManifest,
        weights: FloatArray,
        centers: FloatArray,
    ) -> Path:
        return write_archive(path, manifest, {"weights": weights, "centers": centers})

    def load(self, path: Path) -> WeightSnapshot:
        manifest, arrays = read_archive(
            path, WeightSnapshotManifest, ("weights", "centers")
        )
        shape = (manifest.nodes, manifest.filter_length)
        for name in ("weights", "centers"):
            if arrays[name].shape != shape:
                raise InputError(
                    f"{path}: {name} have shape {arrays[name].shape}, manifest says {shape}"
                )
        return WeightSnapshot(manifest, arrays["weights"], arrays["centers"])
