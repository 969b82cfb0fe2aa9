"""View-dependent local maps.

A keyframe owns a 2D container of cells laid over its image plane.  Points
from any posed RGB-D frame are moved into the keyframe camera, projected,
binned by cell and folded into that cell's moments, so the 3D footprint of a
cell grows with its distance from the keyframe camera.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .geometry import (CameraIntrinsics, ContainerLayout, Se3Pose, cell_indices, pixel_grid,
                       project_points, relative_transform, unproject_pixels)
from .ndt import MIN_SUPPORT, CellMoments, Ellipsoid, MomentAccumulator
from .noise import DEFAULT_K, NoiseModel, elongated_mask

DEPTH_RANGE = (0.3, 10.0)


@dataclass(eq=False)
class RgbdFrame:
    timestamp: float
    color: np.ndarray
    depth: np.ndarray
    pose: Se3Pose

    def __post_init__(self):
        self.color = np.asarray(self.color)
        self.depth = np.asarray(self.depth, dtype=float)
        if self.color.ndim == 2:
            self.color = np.repeat(self.color[:, :, None], 3, axis=2)
        if self.color.shape[:2] != self.depth.shape or self.depth.ndim != 2:
            raise DimensionMismatch(
                f"color {self.color.shape[:2]} and depth {self.depth.shape} differ")
        if np.any(self.depth[np.isfinite(self.depth)] < 0):
            raise ValueError("depth values must be non-negative")

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    def valid_pixels(self, stride: int = 1, depth_range=DEPTH_RANGE):
        """Pixel coordinates and depths of usable measurements at the given stride."""
        if stride < 1:
            raise ValueError("stride must be >= 1")
        u, v = pixel_grid(self.width, self.height, stride)
        d = self.depth[v, u]
        with np.errstate(invalid="ignore"):
            ok = np.isfinite(d) & (d > 0) & (d >= depth_range[0]) & (d <= depth_range[1])
        return u[ok], v[ok], d[ok]

    def points(self, intr: CameraIntrinsics, stride: int = 1, depth_range=DEPTH_RANGE):
        """Camera-frame points (N, 3) and their colors (N, 3)."""
        u, v, d = self.valid_pixels(stride, depth_range)
        return unproject_pixels(intr, u, v, d), self.color[v, u].astype(float)


@dataclass
class IntegrationStats:
    points_used: int = 0
    points_rejected: int = 0
    cells_touched: int = 0


class Keyframe:
    def __init__(self, id: int, pose: Se3Pose, intrinsics: CameraIntrinsics = None,
                 layout: ContainerLayout = None, source_timestamp: float = 0.0,
                 min_support: int = MIN_SUPPORT, depth_range=DEPTH_RANGE):
        self.id = int(id)
        self.pose = pose
        self.intrinsics = intrinsics or CameraIntrinsics()
        self.layout = layout or ContainerLayout.for_source(self.intrinsics.width,
                                                           self.intrinsics.height)
        self.source_timestamp = float(source_timestamp)
        self.min_support = min_support
        self.depth_range = tuple(depth_range)
        self.cells = CellMoments(self.layout.n_cells)
        self.frames_integrated = 0

    def __repr__(self):
        return (f"Keyframe(id={self.id}, frames={self.frames_integrated}, "
                f"cells={int(np.count_nonzero(self.cells.count))})")

    def cell(self, i: int, j: int) -> MomentAccumulator:
        return self.cells.get(int(self.layout.flat(i, j)))

    def integrate_frame(self, frame: RgbdFrame, stride: int = 1) -> IntegrationStats:
        return integrate_frame(self, frame, stride)

    def filter_elongated(self, model: NoiseModel, k: float = DEFAULT_K) -> int:
        return filter_elongated(self, model, k)

    def ellipsoids(self):
        return keyframe_ellipsoids(self)

    def ellipsoid_arrays(self):
        """Finalized cells as arrays, see :meth:`CellMoments.finalize_all`."""
        return self.cells.finalize_all(self.min_support)


def integrate_frame(kf: Keyframe, frame: RgbdFrame, stride: int = 1) -> IntegrationStats:
    """Fold one posed RGB-D frame into the keyframe's cells (one batch per cell)."""
    if frame.depth.shape != (kf.intrinsics.height, kf.intrinsics.width):
        raise DimensionMismatch(
            f"frame {frame.depth.shape} does not match camera "
            f"{(kf.intrinsics.height, kf.intrinsics.width)}")
    pts, colors = frame.points(kf.intrinsics, stride, kf.depth_range)
    stats = IntegrationStats()
    if len(pts) == 0:
        return stats
    t = relative_transform(kf.pose, frame.pose)
    pk = t.apply(pts)
    u, v, _, in_front = project_points(kf.intrinsics, pk)
    i, j, inside = cell_indices(kf.layout, u, v)
    keep = in_front & inside
    stats.points_used = int(keep.sum())
    stats.points_rejected = int(len(pts) - stats.points_used)
    if stats.points_used:
        touched = kf.cells.accumulate(kf.layout.flat(i[keep], j[keep]), pk[keep], colors[keep])
        stats.cells_touched = len(touched)
    kf.frames_integrated += 1
    return stats


def filter_elongated(kf: Keyframe, model: NoiseModel, k: float = DEFAULT_K) -> int:
    """Empty every finalizable cell whose largest axis exceeds ``k`` sigma of the sensor."""
    if not k > 0:
        raise ValueError("k must be positive")
    cells, means, _, _, _, w, _ = kf.ellipsoid_arrays()
    if len(cells) == 0:
        return 0
    z = np.maximum(means[:, 2], 1e-6)
    bad = elongated_mask(model, w[:, 0], z, k)
    kf.cells.reset(cells[bad])
    return int(bad.sum())


def keyframe_ellipsoids(kf: Keyframe):
    """``[((i, j), Ellipsoid), ...]`` for all supported cells in row-major order."""
    cells, means, cov, colors, support, w, v = kf.ellipsoid_arrays()
    ii, jj = kf.layout.unflat(cells)
    return [((int(a), int(b)), Ellipsoid(means[n], cov[n], colors[n], int(support[n]), w[n], v[n]))
            for n, (a, b) in enumerate(zip(ii, jj))]
