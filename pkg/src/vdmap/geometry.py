"""Rigid transforms, the pinhole camera and keyframe cell indexing.

Camera frames follow the usual vision convention: x right, y down, z along
the optical axis.  Poses map local coordinates into the parent frame
(``world <- camera``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import InvalidPose, NonPositiveDepth, OutOfContainer

DEPTH_EPS = 1e-6
_ORTHO_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class Se3Pose:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise InvalidPose("pose contains non-finite values")
        if np.abs(r @ r.T - np.eye(3)).max() > _ORTHO_TOL or np.linalg.det(r) < 0:
            raise InvalidPose("rotation is not a proper orthonormal matrix")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Se3Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> "Se3Pose":
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_quaternion(cls, translation, quat_xyzw) -> "Se3Pose":
        """Build a pose from a translation and an (x, y, z, w) quaternion.

        The quaternion is normalized first, so rounded file values are fine.
        """
        q = np.asarray(quat_xyzw, dtype=float)
        norm = np.linalg.norm(q)
        if not np.isfinite(norm) or norm < 1e-12:
            raise InvalidPose(f"degenerate quaternion {q}")
        return cls(Rotation.from_quat(q / norm).as_matrix(), translation)

    def quaternion(self) -> np.ndarray:
        """Unit quaternion (x, y, z, w) with non-negative w."""
        q = Rotation.from_matrix(self.rotation).as_quat()
        return -q if q[3] < 0 else q

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "Se3Pose":
        rt = self.rotation.T
        return Se3Pose(rt, -rt @ self.translation)

    def compose(self, other: "Se3Pose") -> "Se3Pose":
        return Se3Pose(self.rotation @ other.rotation,
                       self.rotation @ other.translation + self.translation)

    __matmul__ = compose

    def apply(self, points) -> np.ndarray:
        """Transform a single point (3,) or an array of points (N, 3)."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    @property
    def optical_axis(self) -> np.ndarray:
        return self.rotation[:, 2]

    def allclose(self, other: "Se3Pose", atol=1e-9) -> bool:
        return bool(np.allclose(self.rotation, other.rotation, rtol=0, atol=atol)
                    and np.allclose(self.translation, other.translation, rtol=0, atol=atol))

    def __repr__(self):
        t = ", ".join(f"{x:.4g}" for x in self.translation)
        q = ", ".join(f"{x:.4g}" for x in self.quaternion())
        return f"Se3Pose(t=[{t}], q=[{q}])"


def relative_transform(k0: Se3Pose, ki: Se3Pose) -> Se3Pose:
    """Transform taking frame ``ki`` coordinates into keyframe ``k0`` coordinates."""
    return k0.inverse().compose(ki)


def transform_point(t: Se3Pose, p) -> np.ndarray:
    return t.apply(p)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float = 525.0
    fy: float = 525.0
    cx: float = 319.5
    cy: float = 239.5
    width: int = 640
    height: int = 480

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def scaled(self, factor: float) -> "CameraIntrinsics":
        return CameraIntrinsics(self.fx * factor, self.fy * factor,
                                self.cx * factor, self.cy * factor,
                                int(round(self.width * factor)),
                                int(round(self.height * factor)))


def project(intr: CameraIntrinsics, p) -> tuple[float, float, float]:
    x, y, z = (float(c) for c in np.asarray(p, dtype=float).reshape(3))
    if z <= DEPTH_EPS:
        raise NonPositiveDepth(f"point depth {z} is not in front of the camera")
    return x * intr.fx / z + intr.cx, y * intr.fy / z + intr.cy, z


def unproject(intr: CameraIntrinsics, u: float, v: float, d: float) -> np.ndarray:
    if not d > 0:
        raise NonPositiveDepth(f"depth {d} must be positive")
    return np.array([(u - intr.cx) * d / intr.fx, (v - intr.cy) * d / intr.fy, d])


def project_points(intr: CameraIntrinsics, points):
    """Vectorized projection.

    Returns ``(u, v, d, valid)``; ``valid`` is False where depth <= 1e-6 and
    u, v are NaN there.
    """
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    z = p[:, 2]
    valid = z > DEPTH_EPS
    zs = np.where(valid, z, np.nan)
    u = p[:, 0] * intr.fx / zs + intr.cx
    v = p[:, 1] * intr.fy / zs + intr.cy
    return u, v, z, valid


def unproject_pixels(intr: CameraIntrinsics, u, v, d) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    d = np.asarray(d, dtype=float)
    return np.stack([(u - intr.cx) * d / intr.fx, (v - intr.cy) * d / intr.fy, d], axis=-1)


def pixel_grid(width: int, height: int, stride: int = 1):
    """Integer pixel coordinates (u, v) sampled every ``stride`` pixels, row-major."""
    vs, us = np.mgrid[0:height:stride, 0:width:stride]
    return us.ravel(), vs.ravel()


@dataclass(frozen=True)
class ContainerLayout:
    """Fixed-size 2D cell container on the keyframe image plane.

    The source image sits at the container center; ``offset_u``/``offset_v``
    shift source pixel coordinates into container coordinates.
    """

    cell_px: int = 5
    container_w_px: int = 1280
    container_h_px: int = 960
    offset_u: int = 320
    offset_v: int = 240

    def __post_init__(self):
        if self.cell_px < 1:
            raise ValueError("cell_px must be >= 1")
        if self.container_w_px % self.cell_px or self.container_h_px % self.cell_px:
            raise ValueError("container size must be a multiple of cell_px")

    @classmethod
    def for_source(cls, width: int, height: int, cell_px: int = 5,
                   container_w_px: int = 1280, container_h_px: int = 960) -> "ContainerLayout":
        if cell_px < 1:
            raise ValueError("cell_px must be >= 1")
        # round the container up so it stays a whole number of cells
        container_w_px = -(-container_w_px // cell_px) * cell_px
        container_h_px = -(-container_h_px // cell_px) * cell_px
        return cls(cell_px, container_w_px, container_h_px,
                   int((container_w_px - width) / 2), int((container_h_px - height) / 2))

    @property
    def n_cols(self) -> int:
        return self.container_w_px // self.cell_px

    @property
    def n_rows(self) -> int:
        return self.container_h_px // self.cell_px

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_cols, self.n_rows

    @property
    def n_cells(self) -> int:
        return self.n_cols * self.n_rows

    def flat(self, i, j):
        """Row-major flat index of cell (i, j): rows are j, columns i."""
        return np.asarray(j) * self.n_cols + np.asarray(i)

    def unflat(self, k):
        k = np.asarray(k)
        return k % self.n_cols, k // self.n_cols

    def cell_bounds(self, i: int, j: int):
        """Source-pixel bounds ``(u0, v0, u1, v1)`` of a cell."""
        c = self.cell_px
        return (i * c - self.offset_u, j * c - self.offset_v,
                (i + 1) * c - self.offset_u, (j + 1) * c - self.offset_v)


# absorbs unproject/project round-off (~1e-13 px) so integer pixels keep their cell
PIXEL_SNAP = 1e-9


def cell_index(layout: ContainerLayout, u: float, v: float) -> tuple[int, int]:
    su, sv = u + layout.offset_u + PIXEL_SNAP, v + layout.offset_v + PIXEL_SNAP
    if not (0 <= su < layout.container_w_px and 0 <= sv < layout.container_h_px):
        raise OutOfContainer(f"pixel ({u}, {v}) falls outside the container")
    return int(np.floor(su / layout.cell_px)), int(np.floor(sv / layout.cell_px))


def cell_indices(layout: ContainerLayout, u, v):
    """Vectorized :func:`cell_index`; returns ``(i, j, inside)``.

    NaN coordinates are reported as outside. Indices are -1 where outside.
    """
    su = np.asarray(u, dtype=float) + (layout.offset_u + PIXEL_SNAP)
    sv = np.asarray(v, dtype=float) + (layout.offset_v + PIXEL_SNAP)
    with np.errstate(invalid="ignore"):
        inside = (su >= 0) & (su < layout.container_w_px) & (sv >= 0) & (sv < layout.container_h_px)
    i = np.full(su.shape, -1, dtype=np.int64)
    j = np.full(sv.shape, -1, dtype=np.int64)
    i[inside] = np.floor(su[inside] / layout.cell_px).astype(np.int64)
    j[inside] = np.floor(sv[inside] / layout.cell_px).astype(np.int64)
    return i, j, inside


def axis_angle_between(a: Se3Pose, b: Se3Pose) -> float:
    """Angle in radians between the optical axes of two camera poses."""
    c = float(np.clip(np.dot(a.optical_axis, b.optical_axis), -1.0, 1.0))
    return float(np.arccos(c))


def look_at(eye, target, up=(0.0, -1.0, 0.0)) -> Se3Pose:
    """Camera pose at ``eye`` whose optical axis points at ``target``.

    ``up`` is the world direction that should appear up in the image; with
    y-down camera conventions the default keeps world -y up.
    """
    eye = np.asarray(eye, dtype=float)
    z = np.asarray(target, dtype=float) - eye
    z /= np.linalg.norm(z)
    up = np.asarray(up, dtype=float)
    x = np.cross(-up, z)
    if np.linalg.norm(x) < 1e-9:
        x = np.cross(np.array([0.0, 0.0, 1.0]), z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return Se3Pose(np.column_stack([x, y, z]), eye)
