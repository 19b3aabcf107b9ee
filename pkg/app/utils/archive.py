"""Archive Storage
===============
Reads and writes the ``.npz`` archives used for scenes, compensation sets
and weight snapshots. Each archive carries its pydantic manifest as a JSON
string under the ``manifest`` key, so one file is self-describing and no
pickled objects are ever loaded.
"""

from pathlib import Path
from typing import TypeVar

import numpy as np
from pydantic import BaseModel, ValidationError

from app.services.signal.signal_service import FloatArray
from app.utils.exceptions import InputError

ManifestT = TypeVar("ManifestT", bound=BaseModel)

MANIFEST_KEY = "manifest"


def archive_path(path: Path) -> Path:
    return path if path.suffix == ".npz" else path.with_name(path.name + ".npz")


def write_archive(path: Path, manifest: BaseModel, arrays: dict[str, FloatArray]) -> Path:
    target = archive_path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    payload = {name: np.asarray(arr, dtype=np.float64) for name, arr in arrays.items()}
    with target.open("wb") as fh:
        np.savez(fh, **payload, **{MANIFEST_KEY: np.array(manifest.model_dump_json())})
    return target


def read_archive(
    path: Path, manifest_type: type[ManifestT], names: tuple[str, ...]
) -> tuple[ManifestT, dict[str, FloatArray]]:
    target = archive_path(path)
    try:
        with np.load(target, allow_pickle=False) as data:
            raw_manifest = str(data[MANIFEST_KEY])
            arrays = {name: np.array(data[name], dtype=np.float64) for name in names}
    except FileNotFoundError:
        raise InputError(f"archive {target} does not exist", code="ARCHIVE_NOT_FOUND")
    except KeyError as e:
        raise InputError(f"archive {target} is missing entry {e}")
    except (OSError, ValueError) as e:
        raise InputError(f"cannot read archive {target}: {e}")

    try:
        manifest = manifest_type.model_validate_json(raw_manifest)
    except ValidationError as e:
        raise InputError(f"archive {target} has an invalid manifest: {e}")
    return manifest, arrays
