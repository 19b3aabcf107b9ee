"""Compensation Repository
=======================
Persists fitted compensation sets in the scene archive format so an
expensive fit can be reused across runs.
"""

from pathlib import Path

from app.services.compensation.compensation_service import CompensationSet
from app.utils.archive import read_archive, write_archive
from app.utils.exceptions import InputError
from app.utils.models import CompensationManifest


class CompensationRepository:
    def save(self, path: Path, comp: CompensationSet) -> Path:
        manifest = CompensationManifest(nodes=comp.nodes, length=comp.length)
        return write_archive(
            path,
            manifest,
            {"filters": comp.kernel(), "residuals": comp.residual_matrix()},
        )

    def load(self, path: Path) -> CompensationSet:
        manifest, arrays = read_archive(
            path, CompensationManifest, ("filters", "residuals")
        )
        k, length = manifest.nodes, manifest.length
        if arrays["filters"].shape != (k, k, length):
            raise InputError(
                f"{path}: filters have shape {arrays['filters'].shape}, "
                f"manifest says {(k, k, length)}"
            )
        return CompensationSet.from_kernel(arrays["filters"], arrays["residuals"])
