"""Built-in synthetic scenes and camera paths used by tests and the CLI."""

from __future__ import annotations

import numpy as np

from .dataio import Box, Plane, Sphere, SyntheticScene
from .geometry import CameraIntrinsics, look_at

ROOM_TEXT = """\
# walls, floor (y down) and ceiling of a 4.4 x 2.6 x 5.1 m room
PLANE 0.1 -0.03 4.13   0 0 -1   1.3 2.2   180 180 170
PLANE -2.1 -0.03 1.6   1 0 0    2.55 1.3  150 170 190
PLANE 2.3 -0.03 1.6    -1 0 0   2.55 1.3  190 160 150
PLANE 0.1 1.27 1.6     0 -1 0   2.55 2.2  120 100 80
PLANE 0.1 -1.33 1.6    0 1 0    2.55 2.2  230 230 230
# furniture
BOX 0.45 0.87 2.63     0.5 0.4 0.35       40 90 160
SPHERE -0.93 0.87 2.91 0.4                190 40 40
BOX -1.6 0.57 3.72     0.31 0.7 0.25      90 140 60
NOISE 1.0
"""


def fronto_plane(z: float = 2.0, half: float = 10.0, color=(200, 200, 200)) -> SyntheticScene:
    return SyntheticScene([Plane((0.0, 0.0, z), (0.0, 0.0, -1.0), (half, half), color)])


def tilted_plane(near: float = 0.5, far: float = 5.0, intr: CameraIntrinsics = None,
                 noise_multiplier: float = 0.0) -> SyntheticScene:
    """Floor-like plane whose depth runs from ``near`` (bottom row) to ``far`` (top row)."""
    intr = intr or CameraIntrinsics()
    top = (0 - intr.cy) / intr.fy
    bottom = (intr.height - 1 - intr.cy) / intr.fy
    # y = y0 + k z through (bottom * near, near) and (top * far, far)
    y0 = (bottom - top) / (1.0 / near - 1.0 / far)
    k = bottom - y0 / near
    normal = np.array([0.0, 1.0, -k])
    return SyntheticScene([Plane((0.0, y0, 0.0), normal, (20.0, 20.0), (180, 180, 180))],
                          noise_multiplier)


def step_edge(near: float = 1.0, far: float = 3.0, edge_x: float = 0.0) -> SyntheticScene:
    """Near half-plane for x < edge_x in front of a full far plane."""
    half = 5.0
    return SyntheticScene([
        Plane((edge_x - half, 0.0, near), (0, 0, -1), (half, half), (220, 60, 60)),
        Plane((0.0, 0.0, far), (0, 0, -1), (10.0, 10.0), (60, 60, 220)),
    ])


def desk_scene(noise_multiplier: float = 0.0) -> SyntheticScene:
    """Back wall with a few objects, for sweeps of several keyframes."""
    return SyntheticScene([
        Plane((0.0, 0.0, 3.0), (0, 0, -1), (4.0, 6.0), (200, 200, 190)),
        Plane((0.0, 0.9, 1.5), (0, -1, 0), (6.0, 3.0), (120, 100, 80)),
        Box((0.3, 0.6, 2.2), (0.3, 0.3, 0.2), (40, 90, 160)),
        Sphere((-0.6, 0.5, 2.4), 0.3, (190, 40, 40)),
    ], noise_multiplier)


def room_scene(noise_multiplier: float = 1.0) -> SyntheticScene:
    from .dataio import parse_scene

    scene = parse_scene(ROOM_TEXT, "<room>")
    scene.noise_multiplier = noise_multiplier
    return scene


def sweep_poses(n: int = 5, step: float = 0.15, target=(0.0, 0.3, 3.0), height: float = 0.0):
    """Lateral sweep centered on x = 0, every camera looking at ``target``."""
    xs = (np.arange(n) - (n - 1) / 2.0) * step
    return [look_at((x, height, 0.0), (x * 0.5 + target[0], target[1], target[2])) for x in xs]


def room_poses(n: int = 6):
    """Short arc through the room looking at the furniture."""
    out = []
    for k in range(n):
        s = k / max(n - 1, 1)
        eye = (-0.8 + 1.6 * s, -0.2, 0.2 + 0.3 * np.sin(np.pi * s))
        target = (-0.6 + 1.2 * s, 0.5, 3.0)
        out.append(look_at(eye, target))
    return out
