"""Keyframe graph: covisibility edges and the per-frame routing policy.

Each incoming posed frame either updates the current keyframe, updates an
older keyframe it re-observes (loop closure), or founds a new keyframe.
Covisibility is measured geometrically: the fraction of a fixed grid of
valid-depth samples that reprojects inside the keyframe's source image.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np

from .errors import MalformedLine, NoValidDepth, UnknownKeyframe
from .geometry import (CameraIntrinsics, ContainerLayout, Se3Pose, axis_angle_between,
                       project_points, relative_transform, unproject_pixels)
from .keyframe import DEPTH_RANGE, Keyframe, RgbdFrame
from .ndt import MIN_SUPPORT

log = logging.getLogger(__name__)

DELTA_UPDATE = 0.8
DELTA_LOOP = 0.6
COVIS_SAMPLES = 768


def sample_grid(width: int, height: int, samples: int = COVIS_SAMPLES):
    """Regular grid of about ``samples`` pixel positions (32x24 for 768 on 4:3)."""
    nx = max(1, int(round(np.sqrt(samples * width / height))))
    ny = max(1, int(round(samples / nx)))
    us = np.floor((np.arange(nx) + 0.5) * width / nx).astype(int)
    vs = np.floor((np.arange(ny) + 0.5) * height / ny).astype(int)
    vv, uu = np.meshgrid(vs, us, indexing="ij")
    return uu.ravel(), vv.ravel()


def covisibility(frame: RgbdFrame, kf: Keyframe, samples: int = COVIS_SAMPLES,
                 depth_range=DEPTH_RANGE) -> float:
    """Fraction of the frame's sampled points that the keyframe camera also sees."""
    if samples < 100:
        raise ValueError("covisibility needs at least 100 samples")
    intr = kf.intrinsics
    u, v = sample_grid(frame.width, frame.height, samples)
    d = frame.depth[v, u]
    with np.errstate(invalid="ignore"):
        ok = np.isfinite(d) & (d >= depth_range[0]) & (d <= depth_range[1]) & (d > 0)
    if not ok.any():
        raise NoValidDepth("frame has no valid depth on the sampling grid")
    pts = unproject_pixels(intr, u[ok], v[ok], d[ok])
    pk = relative_transform(kf.pose, frame.pose).apply(pts)
    pu, pv, _, in_front = project_points(intr, pk)
    with np.errstate(invalid="ignore"):
        seen = in_front & (pu >= 0) & (pu < intr.width) & (pv >= 0) & (pv < intr.height)
    return float(seen.sum()) / float(ok.sum())


class ActionKind(enum.Enum):
    UPDATED_CURRENT = "updated_current"
    LOOP_CLOSURE_UPDATE = "loop_closure_update"
    CREATED_KEYFRAME = "created_keyframe"


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    keyframe_id: int
    delta: float


class MapGraph:
    def __init__(self, intrinsics: CameraIntrinsics = None, layout: ContainerLayout = None,
                 delta_update: float = DELTA_UPDATE, delta_loop: float = DELTA_LOOP,
                 covis_samples: int = COVIS_SAMPLES, stride: int = 1,
                 depth_range=DEPTH_RANGE, min_support: int = MIN_SUPPORT):
        if not (0 < delta_update < 1 and 0 < delta_loop < 1):
            raise ValueError("covisibility thresholds must lie in (0, 1)")
        self.intrinsics = intrinsics or CameraIntrinsics()
        self.layout = layout or ContainerLayout.for_source(self.intrinsics.width,
                                                           self.intrinsics.height)
        self.delta_update = delta_update
        self.delta_loop = delta_loop
        self.covis_samples = covis_samples
        self.stride = stride
        self.depth_range = tuple(depth_range)
        self.min_support = min_support
        self.keyframes: list[Keyframe] = []
        self.edges: dict[tuple[int, int], float] = {}
        self.current: int | None = None

    def __len__(self):
        return len(self.keyframes)

    def keyframe(self, kf_id: int) -> Keyframe:
        if not 0 <= kf_id < len(self.keyframes):
            raise UnknownKeyframe(kf_id)
        return self.keyframes[kf_id]

    def edge(self, i: int, j: int) -> float:
        return self.edges.get((min(i, j), max(i, j)), 0.0)

    def set_edge(self, i: int, j: int, delta: float) -> None:
        if i == j:
            return
        if not 0.0 <= delta <= 1.0:
            raise ValueError(f"edge weight {delta} outside [0, 1]")
        self.edges[(min(i, j), max(i, j))] = float(delta)

    def neighbors(self, kf_id: int) -> list[int]:
        self.keyframe(kf_id)
        out = [b if a == kf_id else a for (a, b), w in self.edges.items()
               if w > 0 and kf_id in (a, b)]
        return sorted(out)

    def new_keyframe(self, pose: Se3Pose, timestamp: float = 0.0) -> Keyframe:
        kf = Keyframe(len(self.keyframes), pose, self.intrinsics, self.layout, timestamp,
                      self.min_support, self.depth_range)
        self.keyframes.append(kf)
        return kf

    def add_keyframe(self, frame: RgbdFrame, deltas: dict[int, float] = None) -> Keyframe:
        """Found a keyframe at the frame's pose, integrate the frame and link it.

        ``deltas`` holds already measured covisibilities against existing
        keyframes; missing ones are measured here.
        """
        deltas = dict(deltas or {})
        for kf in self.keyframes:
            if kf.id not in deltas:
                deltas[kf.id] = self.covisibility(frame, kf)
        kf = self.new_keyframe(frame.pose, frame.timestamp)
        kf.integrate_frame(frame, self.stride)
        for other, d in sorted(deltas.items()):
            if d > 0:
                self.set_edge(kf.id, other, d)
        self.current = kf.id
        return kf

    def covisibility(self, frame: RgbdFrame, kf: Keyframe) -> float:
        return covisibility(frame, kf, self.covis_samples, self.depth_range)

    def process_frame(self, frame: RgbdFrame) -> Action:
        return process_frame(self, frame)


def process_frame(graph: MapGraph, frame: RgbdFrame) -> Action:
    if not graph.keyframes:
        kf = graph.add_keyframe(frame)
        return Action(ActionKind.CREATED_KEYFRAME, kf.id, 1.0)

    cur = graph.keyframe(graph.current)
    d_cur = graph.covisibility(frame, cur)
    if d_cur >= graph.delta_update:
        cur.integrate_frame(frame, graph.stride)
        return Action(ActionKind.UPDATED_CURRENT, cur.id, d_cur)

    deltas = {cur.id: d_cur}
    for kf in graph.keyframes:
        if kf.id == cur.id:
            continue
        d = graph.covisibility(frame, kf)
        deltas[kf.id] = d
        if d >= graph.delta_loop:
            kf.integrate_frame(frame, graph.stride)
            graph.set_edge(cur.id, kf.id, d)
            graph.current = kf.id
            log.debug("loop closure: frame %.3f -> keyframe %d (delta %.3f)",
                      frame.timestamp, kf.id, d)
            return Action(ActionKind.LOOP_CLOSURE_UPDATE, kf.id, d)

    kf = graph.add_keyframe(frame, deltas)
    return Action(ActionKind.CREATED_KEYFRAME, kf.id, d_cur)


def neighbor_groups(graph: MapGraph, center: int, max_dist: float = 0.0,
                    max_angle: float = 0.0) -> list[int]:
    """Covisibility neighbors of ``center`` plus keyframes close in position and heading.

    A negative ``max_dist`` or ``max_angle`` disables the pose criterion.
    """
    c = graph.keyframe(center)
    ids = set(graph.neighbors(center))
    ids.add(center)
    if max_dist >= 0 and max_angle >= 0:
        for kf in graph.keyframes:
            if kf.id in ids:
                continue
            dist = float(np.linalg.norm(kf.pose.translation - c.pose.translation))
            if dist <= max_dist and axis_angle_between(kf.pose, c.pose) <= max_angle:
                ids.add(kf.id)
    return sorted(ids)


def format_graph(graph: MapGraph) -> str:
    """``KF id tx ty tz qx qy qz qw timestamp`` and ``EDGE i j delta`` lines."""
    lines = []
    for kf in graph.keyframes:
        vals = [*kf.pose.translation, *kf.pose.quaternion(), kf.source_timestamp]
        lines.append(f"KF {kf.id} " + " ".join(repr(float(x)) for x in vals))
    for (i, j), d in sorted(graph.edges.items()):
        lines.append(f"EDGE {i} {j} {float(d)!r}")
    return "\n".join(lines) + "\n"


def parse_graph(text: str, path: str = "<graph>"):
    """Parse graph lines into ``([(id, pose, timestamp)], {(i, j): delta})``."""
    kfs, edges = [], {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            if parts[0] == "KF" and len(parts) == 10:
                vals = [float(x) for x in parts[2:]]
                pose = Se3Pose.from_quaternion(vals[0:3], vals[3:7])
                kfs.append((int(parts[1]), pose, vals[7]))
            elif parts[0] == "EDGE" and len(parts) == 4:
                i, j, d = int(parts[1]), int(parts[2]), float(parts[3])
                if not 0.0 <= d <= 1.0:
                    raise ValueError(d)
                edges[(min(i, j), max(i, j))] = d
            else:
                raise ValueError(parts[0])
        except ValueError:
            raise MalformedLine(path, n, raw) from None
    return kfs, edges
