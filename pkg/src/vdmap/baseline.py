"""Fixed-resolution voxel baselines: a log-odds occupancy grid and an NDT grid.

Both store voxels sparsely, keyed by a packed 64-bit integer index kept in
sorted order, which makes ``grid_centers`` deterministic.
"""

from __future__ import annotations

import time

import numpy as np

from .errors import DimensionMismatch
from .geometry import CameraIntrinsics
from .keyframe import DEPTH_RANGE, RgbdFrame
from .ndt import MIN_SUPPORT, CellMoments

LOG_ODDS_HIT = 0.85
LOG_ODDS_MISS = -0.4
LOG_ODDS_MIN = -2.0
LOG_ODDS_MAX = 3.5

_BITS = 21
_OFF = 1 << (_BITS - 1)
_MASK = (1 << _BITS) - 1


def pack(idx: np.ndarray) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64).reshape(-1, 3) + _OFF
    if np.any(idx < 0) or np.any(idx > _MASK):
        raise ValueError("voxel index outside the addressable range")
    return (idx[:, 0] << (2 * _BITS)) | (idx[:, 1] << _BITS) | idx[:, 2]


def unpack(keys: np.ndarray) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.int64)
    return np.stack([(keys >> (2 * _BITS)) & _MASK, (keys >> _BITS) & _MASK, keys & _MASK],
                    axis=1) - _OFF


class VoxelGrid:
    def __init__(self, voxel_size: float = 0.1, origin=(0.0, 0.0, 0.0), mode: str = "occupancy",
                 min_support: int = MIN_SUPPORT):
        if not voxel_size > 0:
            raise ValueError("voxel_size must be positive")
        if mode not in ("occupancy", "ndt"):
            raise ValueError(f"unknown mode {mode!r}")
        self.voxel_size = float(voxel_size)
        self.origin = np.asarray(origin, dtype=float)
        self.mode = mode
        self.min_support = min_support
        self.keys = np.zeros(0, dtype=np.int64)
        self.log_odds = np.zeros(0)
        self.moments = CellMoments(0)

    def __len__(self):
        return len(self.keys)

    def voxel_of(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float).reshape(-1, 3)
        return np.floor((p - self.origin) / self.voxel_size).astype(np.int64)

    def center_of(self, idx) -> np.ndarray:
        return self.origin + (np.asarray(idx, dtype=float) + 0.5) * self.voxel_size

    def slots(self, keys: np.ndarray) -> np.ndarray:
        """Storage positions of ``keys``, inserting empty voxels as needed."""
        keys = np.asarray(keys, dtype=np.int64)
        missing = np.setdiff1d(keys, self.keys, assume_unique=False)
        if len(missing):
            merged = np.union1d(self.keys, missing)
            old_pos = np.searchsorted(merged, self.keys)
            log_odds = np.zeros(len(merged))
            log_odds[old_pos] = self.log_odds
            moments = CellMoments(len(merged))
            moments.count[old_pos] = self.moments.count
            moments.point_sum[old_pos] = self.moments.point_sum
            moments.scatter[old_pos] = self.moments.scatter
            moments.color_sum[old_pos] = self.moments.color_sum
            self.keys, self.log_odds, self.moments = merged, log_odds, moments
        return np.searchsorted(self.keys, keys)

    def occupied(self, threshold: float = 0.0) -> np.ndarray:
        if self.mode == "occupancy":
            return self.log_odds >= threshold
        return self.moments.count >= max(self.min_support, 2)


def traverse_rays(start: np.ndarray, end: np.ndarray, dedupe_every: int = 32) -> np.ndarray:
    """Voxels crossed by segments from ``start`` to ``end`` (voxel units), ends excluded.

    Vectorized Amanatides-Woo DDA over all rays; returns unique voxel indices
    (M, 3) as packed keys.
    """
    start = np.asarray(start, dtype=float).reshape(-1, 3)
    end = np.asarray(end, dtype=float).reshape(-1, 3)
    cur = np.floor(start).astype(np.int64)
    last = np.floor(end).astype(np.int64)
    d = end - start
    step = np.sign(d).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(d != 0, 1.0 / d, np.inf)
        t_delta = np.abs(inv)
        nxt = np.where(step > 0, cur + 1 - start, start - cur)
        t_max = np.where(step != 0, nxt * t_delta, np.inf)
    budget = int(np.abs(last - cur).sum(axis=1).max(initial=0)) + 3
    active = np.flatnonzero(np.any(cur != last, axis=1))
    chunks, pending = [], []
    for it in range(budget):
        if len(active) == 0:
            break
        pending.append(pack(cur[active]))
        tm = t_max[active]
        axis = np.argmin(tm, axis=1)
        rows = active
        t_hit = tm[np.arange(len(rows)), axis]
        cur[rows, axis] += step[rows, axis]
        t_max[rows, axis] += t_delta[rows, axis]
        # crossings at t >= 1 only touch the segment end, which is excluded;
        # the margin absorbs round-off accumulated in t_max
        still = np.any(cur[rows] != last[rows], axis=1) & (t_hit < 1.0 - 1e-9)
        active = rows[still]
        if len(pending) >= dedupe_every:
            chunks.append(np.unique(np.concatenate(pending)))
            pending = []
    if pending:
        chunks.append(np.unique(np.concatenate(pending)))
    if not chunks:
        return np.zeros(0, dtype=np.int64)
    return np.unique(np.concatenate(chunks))


def integrate_frame_voxels(grid: VoxelGrid, frame: RgbdFrame, intrinsics: CameraIntrinsics = None,
                           stride: int = 1, depth_range=DEPTH_RANGE) -> dict:
    """Update the grid with one posed frame; returns ``{voxels_touched, update_ms}``."""
    intr = intrinsics or CameraIntrinsics()
    if frame.depth.shape != (intr.height, intr.width):
        raise DimensionMismatch(f"frame {frame.depth.shape} does not match camera")
    t0 = time.perf_counter()
    pts, colors = frame.points(intr, stride, depth_range)
    if len(pts) == 0:
        return {"voxels_touched": 0, "update_ms": (time.perf_counter() - t0) * 1e3}
    world = frame.pose.apply(pts)
    end_idx = grid.voxel_of(world)
    end_keys = pack(end_idx)
    if grid.mode == "occupancy":
        hit = np.unique(end_keys)
        start = (frame.pose.translation - grid.origin) / grid.voxel_size
        crossed = traverse_rays(np.broadcast_to(start, world.shape),
                                (world - grid.origin) / grid.voxel_size)
        free = np.setdiff1d(crossed, hit, assume_unique=True)
        pos = grid.slots(free)
        grid.log_odds[pos] = np.clip(grid.log_odds[pos] + LOG_ODDS_MISS, LOG_ODDS_MIN, LOG_ODDS_MAX)
        pos = grid.slots(hit)
        grid.log_odds[pos] = np.clip(grid.log_odds[pos] + LOG_ODDS_HIT, LOG_ODDS_MIN, LOG_ODDS_MAX)
        touched = len(hit) + len(free)
    else:
        uniq, inv = np.unique(end_keys, return_inverse=True)
        pos = grid.slots(uniq)
        grid.moments.accumulate(pos[inv], world, colors)
        touched = len(uniq)
    return {"voxels_touched": int(touched), "update_ms": (time.perf_counter() - t0) * 1e3}


def grid_centers(grid: VoxelGrid, occupancy_threshold: float = 0.0) -> np.ndarray:
    """Representative points of occupied voxels in key order.

    Occupancy voxels yield their geometric centers; NDT voxels yield the mean
    of their Gaussian, the center of the stored structure.
    """
    occ = grid.occupied(occupancy_threshold)
    if grid.mode == "occupancy":
        return grid.center_of(unpack(grid.keys[occ])).reshape(-1, 3)
    m = grid.moments.count[occ].astype(float)
    return (grid.moments.point_sum[occ] / m[:, None]).reshape(-1, 3)
