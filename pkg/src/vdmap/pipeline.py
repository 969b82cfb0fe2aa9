"""End-to-end runs shared by the CLI and the acceptance suite."""

from __future__ import annotations

import time
from collections import Counter

import numpy as np

from .baseline import VoxelGrid, grid_centers, integrate_frame_voxels
from .config import RunConfig
from .errors import EmptyInput
from .eval import EvalReport, map_statistics, nearest_neighbor_rmse
from .graph import ActionKind
from .merge import build_global_map


def build_graph(frames, cfg: RunConfig):
    """Route frames through the keyframe graph, then filter every keyframe.

    Returns ``(graph, Counter of action kinds)``.
    """
    graph = cfg.make_graph()
    counts = Counter({k: 0 for k in ActionKind})
    n = 0
    for frame in frames:
        counts[graph.process_frame(frame).kind] += 1
        n += 1
    if n == 0:
        raise EmptyInput("no frames to map")
    model = cfg.noise_model()
    for kf in graph.keyframes:
        kf.filter_elongated(model, cfg.filter_k)
    return graph, counts


def run_vd(frames, cfg: RunConfig, reference=None):
    t0 = time.perf_counter()
    graph, _ = build_graph(frames, cfg)
    gmap = build_global_map(graph, cfg.cluster_params())
    report = map_statistics(gmap, "vd")
    report.element_count = gmap.output_count
    report.runtime_s = time.perf_counter() - t0
    report.parameters = {"cell_px": cfg.cell_px, "stride": cfg.stride}
    report.extra["keyframes"] = len(graph)
    if reference is not None and gmap.output_count:
        report.rmse_mm, report.mean_err_mm = nearest_neighbor_rmse(gmap.ellipsoids.means,
                                                                   reference)
    return report, gmap, graph


def run_voxel(frames, cfg: RunConfig, voxel_size: float, mode: str = "occupancy",
              reference=None):
    t0 = time.perf_counter()
    grid = VoxelGrid(voxel_size, mode=mode, min_support=cfg.min_support)
    intr = cfg.intrinsics()
    update_ms = []
    n = 0
    for frame in frames:
        update_ms.append(integrate_frame_voxels(grid, frame, intr, cfg.baseline_stride,
                                                cfg.depth_range)["update_ms"])
        n += 1
    if n == 0:
        raise EmptyInput("no frames to map")
    centers = grid_centers(grid, cfg.occupancy_threshold)
    label = f"{'octo' if mode == 'occupancy' else 'ndt'}@{voxel_size:g}"
    report = map_statistics(grid, label)
    report.runtime_s = time.perf_counter() - t0
    report.parameters = {"voxel_size": voxel_size, "stride": cfg.baseline_stride}
    report.timings["mean_update_ms"] = float(np.mean(update_ms))
    if reference is not None and len(centers):
        report.rmse_mm, report.mean_err_mm = nearest_neighbor_rmse(centers, reference)
    return report, grid, centers


def compare(frames, cfg: RunConfig, voxel_sizes, reference=None) -> list[EvalReport]:
    frames = list(frames)
    if not frames:
        raise EmptyInput("no frames to compare")
    reports = [run_vd(frames, cfg, reference)[0]]
    for d in voxel_sizes:
        reports.append(run_voxel(frames, cfg, d, "occupancy", reference)[0])
        reports.append(run_voxel(frames, cfg, d, "ndt", reference)[0])
    return reports
