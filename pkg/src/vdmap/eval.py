"""Reconstruction error and map statistics reports."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyInput


def nearest_distances(model_points, reference) -> np.ndarray:
    """Distance from every model point to its nearest reference point (meters)."""
    m = np.asarray(model_points, dtype=float).reshape(-1, 3)
    r = np.asarray(reference, dtype=float).reshape(-1, 3)
    if len(m) == 0 or len(r) == 0:
        raise EmptyInput("model and reference must both be non-empty")
    dist, _ = cKDTree(r).query(m, k=1)
    return dist


def nearest_neighbor_rmse(model_points, reference) -> tuple[float, float]:
    """``(rmse_mm, mean_err_mm)`` of model-to-reference nearest distances."""
    d = nearest_distances(model_points, reference)
    return float(np.sqrt(np.mean(d * d)) * 1e3), float(np.mean(d) * 1e3)


@dataclass
class EvalReport:
    method: str
    element_count: int = 0
    rmse_mm: float | None = None
    mean_err_mm: float | None = None
    runtime_s: float | None = None
    parameters: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def deterministic_items(self):
        """Key/value pairs that must be stable across reruns (timings excluded)."""
        items = [("method", self.method), ("element_count", self.element_count)]
        if self.rmse_mm is not None:
            items += [("rmse_mm", f"{self.rmse_mm:.6f}"), ("mean_err_mm", f"{self.mean_err_mm:.6f}")]
        items += sorted(self.extra.items())
        items += [(f"param.{k}", v) for k, v in sorted(self.parameters.items())]
        return items

    def to_keyvalue(self, prefix: str = "") -> str:
        return "".join(f"{prefix}{k}={v}\n" for k, v in self.deterministic_items())

    def timing_items(self):
        items = [] if self.runtime_s is None else [("runtime_s", f"{self.runtime_s:.3f}")]
        return items + [(k, f"{v:.3f}") for k, v in sorted(self.timings.items())]


def map_statistics(obj, method: str = None) -> EvalReport:
    """Element counts (and recorded timings) of a global map or a voxel grid."""
    from .baseline import VoxelGrid
    from .merge import GlobalMap

    if isinstance(obj, GlobalMap):
        return EvalReport(method or "vd", obj.output_count, runtime_s=obj.generation_seconds,
                          extra={"input_count": obj.input_count,
                                 "output_count": obj.output_count,
                                 "clusters_merged": obj.clusters_merged,
                                 "occluded_removed": obj.occluded_removed})
    if isinstance(obj, VoxelGrid):
        occupied = int(obj.occupied().sum())
        return EvalReport(method or obj.mode, occupied,
                          extra={"voxels_updated": len(obj), "voxel_size": obj.voxel_size})
    raise TypeError(f"unsupported map type {type(obj).__name__}")


def format_table(reports) -> str:
    """Fixed-width human-readable table of reports."""
    header = f"{'method':<18}{'elements':>12}{'rmse_mm':>12}{'mean_mm':>12}{'time_s':>10}"
    lines = [header, "-" * len(header)]
    for r in reports:
        rmse = "-" if r.rmse_mm is None else f"{r.rmse_mm:.2f}"
        mean = "-" if r.mean_err_mm is None else f"{r.mean_err_mm:.2f}"
        rt = "-" if r.runtime_s is None else f"{r.runtime_s:.2f}"
        lines.append(f"{r.method:<18}{r.element_count:>12}{rmse:>12}{mean:>12}{rt:>10}")
    return "\n".join(lines) + "\n"
