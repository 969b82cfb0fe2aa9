"""Dataset ingestion, synthetic scenes, PLY files and graph persistence."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (IoFailure, MalformedHeader, MalformedLine, MissingFile, NoAssociations,
                     UnsupportedProperty)
from .geometry import CameraIntrinsics, ContainerLayout, Se3Pose, pixel_grid
from .keyframe import RgbdFrame
from .noise import NoiseModel, axial_sigma

log = logging.getLogger(__name__)

DEPTH_SCALE = 5000.0
ASSOC_TOLERANCE = 0.02


# --------------------------------------------------------------------------- TUM

@dataclass
class SequenceManifest:
    rgb: list
    depth: list
    groundtruth: list
    tolerance: float = ASSOC_TOLERANCE
    associations: list = field(default_factory=list)
    dropped: int = 0


def _read_list(path: Path, n_fields: int):
    if not path.is_file():
        raise MissingFile(f"missing {path}")
    out = []
    prev = -math.inf
    for n, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != n_fields:
            raise MalformedLine(path, n, raw)
        try:
            ts = float(parts[0])
            rest = [float(x) for x in parts[1:]] if n_fields == 8 else parts[1]
        except ValueError:
            raise MalformedLine(path, n, raw) from None
        if not math.isfinite(ts) or ts <= prev:
            raise MalformedLine(path, n, raw)
        prev = ts
        out.append((ts, rest))
    return out


def associate(rgb_ts, other_ts, tolerance: float):
    """Greedy nearest-timestamp matching.

    Each rgb entry, in order, takes the nearest unused ``other`` entry within
    ``tolerance`` (ties go to the earlier entry). Returns a list with the
    matched index or None per rgb entry.
    """
    other = np.asarray(other_ts, dtype=float)
    used = np.zeros(len(other), dtype=bool)
    out = []
    for t in rgb_ts:
        if len(other) == 0:
            out.append(None)
            continue
        dt = np.where(used, np.inf, np.abs(other - t))
        k = int(np.argmin(dt))
        if dt[k] <= tolerance:
            used[k] = True
            out.append(k)
        else:
            out.append(None)
    return out


def read_tum_manifest(directory, tolerance: float = ASSOC_TOLERANCE) -> SequenceManifest:
    d = Path(directory)
    if not d.is_dir():
        raise MissingFile(f"dataset directory {d} does not exist")
    rgb = _read_list(d / "rgb.txt", 2)
    depth = _read_list(d / "depth.txt", 2)
    gt = _read_list(d / "groundtruth.txt", 8)
    rgb_ts = [t for t, _ in rgb]
    dmatch = associate(rgb_ts, [t for t, _ in depth], tolerance)
    gmatch = associate(rgb_ts, [t for t, _ in gt], tolerance)
    assoc = [(i, dm, gm) for i, (dm, gm) in enumerate(zip(dmatch, gmatch))
             if dm is not None and gm is not None]
    man = SequenceManifest(rgb, depth, gt, tolerance, assoc, len(rgb) - len(assoc))
    if man.dropped:
        log.warning("%s: dropped %d of %d rgb frames without association",
                    d, man.dropped, len(rgb))
    if not assoc:
        raise NoAssociations(f"{d}: no rgb/depth/groundtruth triple within {tolerance}s")
    return man


def read_depth_png(path, depth_scale: float = DEPTH_SCALE) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"missing {path}")
    raw = np.array(Image.open(path)).astype(np.float64)
    return raw / depth_scale


def read_color_png(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"missing {path}")
    return np.array(Image.open(path).convert("RGB"))


def iter_tum_sequence(directory, tolerance: float = ASSOC_TOLERANCE,
                      depth_scale: float = DEPTH_SCALE):
    man = read_tum_manifest(directory, tolerance)
    d = Path(directory)
    for i, dm, gm in man.associations:
        ts, rgb_path = man.rgb[i]
        _, depth_path = man.depth[dm]
        _, g = man.groundtruth[gm]
        pose = Se3Pose.from_quaternion(g[0:3], g[3:7])
        yield RgbdFrame(ts, read_color_png(d / rgb_path),
                        read_depth_png(d / depth_path, depth_scale), pose)


def load_tum_sequence(directory, tolerance: float = ASSOC_TOLERANCE,
                      depth_scale: float = DEPTH_SCALE) -> list[RgbdFrame]:
    return list(iter_tum_sequence(directory, tolerance, depth_scale))


def write_tum_sequence(frames, directory, depth_scale: float = DEPTH_SCALE) -> None:
    """Write frames in TUM layout (rgb/, depth/, rgb.txt, depth.txt, groundtruth.txt)."""
    d = Path(directory)
    (d / "rgb").mkdir(parents=True, exist_ok=True)
    (d / "depth").mkdir(parents=True, exist_ok=True)
    rgb_lines = ["# color images", "# timestamp filename"]
    depth_lines = ["# depth maps", "# timestamp filename"]
    gt_lines = ["# ground truth trajectory", "# timestamp tx ty tz qx qy qz qw"]
    for f in frames:
        name = f"{f.timestamp:.6f}.png"
        Image.fromarray(np.asarray(f.color, dtype=np.uint8), "RGB").save(d / "rgb" / name)
        raw = np.clip(np.rint(np.nan_to_num(f.depth) * depth_scale), 0, 65535).astype(np.uint16)
        Image.fromarray(raw).save(d / "depth" / name)
        rgb_lines.append(f"{f.timestamp:.6f} rgb/{name}")
        depth_lines.append(f"{f.timestamp:.6f} depth/{name}")
        vals = [*f.pose.translation, *f.pose.quaternion()]
        gt_lines.append(f"{f.timestamp:.6f} " + " ".join(f"{x:.9f}" for x in vals))
    (d / "rgb.txt").write_text("\n".join(rgb_lines) + "\n")
    (d / "depth.txt").write_text("\n".join(depth_lines) + "\n")
    (d / "groundtruth.txt").write_text("\n".join(gt_lines) + "\n")


def read_trajectory(path) -> list[tuple[float, Se3Pose]]:
    return [(t, Se3Pose.from_quaternion(g[0:3], g[3:7]))
            for t, g in _read_list(Path(path), 8)]


# --------------------------------------------------------------------- synthetic

def _unit(v):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n < 1e-12:
        raise ValueError("zero-length direction")
    return v / n


@dataclass
class Plane:
    """Rectangle through ``point`` with ``normal`` and half-extents along its in-plane axes.

    The first in-plane axis is ``normal x e_x`` (``normal x e_y`` when the
    normal is close to e_x); the second completes a right-handed frame.
    """

    point: np.ndarray
    normal: np.ndarray
    extent: tuple
    color: tuple = (200, 200, 200)

    def __post_init__(self):
        self.point = np.asarray(self.point, dtype=float)
        self.normal = _unit(self.normal)
        if min(self.extent) <= 0:
            raise ValueError("plane extents must be positive")

    def axes(self):
        ref = np.array([1.0, 0.0, 0.0]) if abs(self.normal[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        a = _unit(np.cross(self.normal, ref))
        return a, np.cross(self.normal, a)

    def intersect(self, o, dirs):
        denom = dirs @ self.normal
        a, b = self.axes()
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            t = ((self.point - o) @ self.normal) / denom
            rel = o - self.point + t[:, None] * dirs
            ok = (np.abs(denom) > 1e-12) & (t > 0) & (np.abs(rel @ a) <= self.extent[0]) \
                & (np.abs(rel @ b) <= self.extent[1])
        return np.where(ok, t, np.inf)

    def sample(self, spacing):
        a, b = self.axes()
        sa = np.arange(-self.extent[0], self.extent[0] + 1e-12, spacing)
        sb = np.arange(-self.extent[1], self.extent[1] + 1e-12, spacing)
        ga, gb = np.meshgrid(sa, sb, indexing="ij")
        return self.point + ga.reshape(-1, 1) * a + gb.reshape(-1, 1) * b


@dataclass
class Sphere:
    center: np.ndarray
    radius: float
    color: tuple = (200, 200, 200)

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        if self.radius <= 0:
            raise ValueError("sphere radius must be positive")

    def intersect(self, o, dirs):
        oc = o - self.center
        a = (dirs * dirs).sum(1)
        b = 2.0 * (dirs @ oc)
        c = oc @ oc - self.radius ** 2
        disc = b * b - 4 * a * c
        sq = np.sqrt(np.maximum(disc, 0.0))
        t0 = (-b - sq) / (2 * a)
        t1 = (-b + sq) / (2 * a)
        t = np.where(t0 > 0, t0, np.where(t1 > 0, t1, np.inf))
        return np.where(disc >= 0, t, np.inf)

    def sample(self, spacing):
        n = max(16, int(4 * np.pi * self.radius ** 2 / spacing ** 2))
        k = np.arange(n) + 0.5
        phi = np.arccos(1 - 2 * k / n)
        theta = np.pi * (1 + 5 ** 0.5) * k
        d = np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], 1)
        return self.center + self.radius * d


@dataclass
class Box:
    """Axis-aligned box."""

    center: np.ndarray
    half_extents: np.ndarray
    color: tuple = (200, 200, 200)

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.half_extents = np.asarray(self.half_extents, dtype=float)
        if np.any(self.half_extents <= 0):
            raise ValueError("box half extents must be positive")

    def intersect(self, o, dirs):
        lo = self.center - self.half_extents
        hi = self.center + self.half_extents
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dirs
            t1 = (lo - o) * inv
            t2 = (hi - o) * inv
        t1 = np.nan_to_num(t1, nan=-np.inf)
        t2 = np.nan_to_num(t2, nan=np.inf)
        tmin = np.minimum(t1, t2).max(1)
        tmax = np.maximum(t1, t2).min(1)
        hit = tmax >= np.maximum(tmin, 0)
        t = np.where(tmin > 0, tmin, tmax)
        return np.where(hit & (t > 0), t, np.inf)

    def sample(self, spacing):
        pts = []
        h = self.half_extents
        for axis in range(3):
            u, v = [a for a in range(3) if a != axis]
            su = np.arange(-h[u], h[u] + 1e-12, spacing)
            sv = np.arange(-h[v], h[v] + 1e-12, spacing)
            gu, gv = np.meshgrid(su, sv, indexing="ij")
            for sign in (-1, 1):
                p = np.zeros((gu.size, 3))
                p[:, axis] = sign * h[axis]
                p[:, u] = gu.ravel()
                p[:, v] = gv.ravel()
                pts.append(self.center + p)
        return np.concatenate(pts)


@dataclass
class SyntheticScene:
    primitives: list = field(default_factory=list)
    noise_multiplier: float = 0.0

    def __post_init__(self):
        if self.noise_multiplier < 0:
            raise ValueError("noise multiplier must be >= 0")


def parse_scene(text: str, path: str = "<scene>") -> SyntheticScene:
    """Parse ``PLANE``/``SPHERE``/``BOX`` lines ('#' comments allowed).

    ``PLANE px py pz nx ny nz ex ey r g b`` (ex, ey are half-extents),
    ``SPHERE cx cy cz rad r g b``, ``BOX cx cy cz hx hy hz r g b``.
    An optional ``NOISE m`` line sets the depth noise multiplier.
    """
    prims = []
    noise = 0.0
    sizes = {"PLANE": 12, "SPHERE": 8, "BOX": 10, "NOISE": 2}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind = parts[0].upper()
        if kind not in sizes or len(parts) != sizes[kind]:
            raise MalformedLine(path, n, raw)
        try:
            v = [float(x) for x in parts[1:]]
            if kind == "PLANE":
                prims.append(Plane(v[0:3], v[3:6], (v[6], v[7]), tuple(int(c) for c in v[8:11])))
            elif kind == "SPHERE":
                prims.append(Sphere(v[0:3], v[3], tuple(int(c) for c in v[4:7])))
            elif kind == "BOX":
                prims.append(Box(v[0:3], v[3:6], tuple(int(c) for c in v[6:9])))
            else:
                noise = v[0]
        except ValueError:
            raise MalformedLine(path, n, raw) from None
    return SyntheticScene(prims, noise)


def load_scene(path) -> SyntheticScene:
    p = Path(path)
    if not p.is_file():
        raise MissingFile(f"missing scene file {p}")
    return parse_scene(p.read_text(), str(p))


def render_synthetic(scene: SyntheticScene, pose: Se3Pose, intr: CameraIntrinsics = None,
                     seed: int = 0, noise: NoiseModel = None, timestamp: float = 0.0) -> RgbdFrame:
    """Ray cast the scene from ``pose``; depth is the camera-frame z of the nearest hit.

    Depth gets Gaussian noise with standard deviation
    ``noise_multiplier * axial_sigma(z)``; misses are 0.
    """
    intr = intr or CameraIntrinsics()
    noise = noise or NoiseModel()
    u, v = pixel_grid(intr.width, intr.height)
    dirs_c = np.stack([(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, np.ones(len(u))], 1)
    dirs = dirs_c @ pose.rotation.T
    o = pose.translation
    best = np.full(len(u), np.inf)
    color = np.zeros((len(u), 3), dtype=np.uint8)
    for prim in scene.primitives:
        t = prim.intersect(o, dirs)
        closer = t < best
        best[closer] = t[closer]
        color[closer] = prim.color
    hit = np.isfinite(best)
    depth = np.where(hit, best, 0.0)
    if scene.noise_multiplier > 0 and hit.any():
        rng = np.random.default_rng(seed)
        sigma = axial_sigma(noise, depth[hit]) * scene.noise_multiplier
        noisy = depth[hit] + rng.standard_normal(hit.sum()) * sigma
        depth[hit] = np.where(noisy > 0, noisy, 0.0)
    color[~hit] = 0
    return RgbdFrame(timestamp, color.reshape(intr.height, intr.width, 3),
                     depth.reshape(intr.height, intr.width), pose)


def sample_scene_surface(scene: SyntheticScene, spacing: float = 0.005) -> np.ndarray:
    """Dense reference cloud on every primitive's surface."""
    return np.concatenate([p.sample(spacing) for p in scene.primitives])


# --------------------------------------------------------------------------- PLY

_PLY_TYPES = {"char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1", "short": "i2",
              "int16": "i2", "ushort": "u2", "uint16": "u2", "int": "i4", "int32": "i4",
              "uint": "u4", "uint32": "u4", "float": "f4", "float32": "f4", "double": "f8",
              "float64": "f8"}
_COV_NAMES = ("cxx", "cxy", "cxz", "cyy", "cyz", "czz")


def _vertex_table(points, colors=None, covariances=None) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(pts)
    fields = [("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
              ("red", "u1"), ("green", "u1"), ("blue", "u1")]
    if covariances is not None:
        fields += [(c, "<f4") for c in _COV_NAMES]
    table = np.zeros(n, dtype=fields)
    table["x"], table["y"], table["z"] = pts[:, 0], pts[:, 1], pts[:, 2]
    if colors is None:
        cols = np.full((n, 3), 255, dtype=np.uint8)
    else:
        cols = np.clip(np.rint(np.asarray(colors, dtype=float).reshape(-1, 3)), 0, 255)
    table["red"], table["green"], table["blue"] = cols[:, 0], cols[:, 1], cols[:, 2]
    if covariances is not None:
        cov = np.asarray(covariances, dtype=float).reshape(-1, 3, 3)
        for name, (a, b) in zip(_COV_NAMES, ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))):
            table[name] = cov[:, a, b]
    return table


def write_ply(path, points, colors=None, covariances=None, fmt: str = "binary") -> None:
    if fmt in ("binary", "binary_le", "binary_little_endian"):
        fmt_line = "binary_little_endian 1.0"
    elif fmt == "ascii":
        fmt_line = "ascii 1.0"
    else:
        raise ValueError(f"unknown PLY format {fmt!r}")
    table = _vertex_table(points, colors, covariances)
    header = ["ply", f"format {fmt_line}", f"element vertex {len(table)}"]
    for name in table.dtype.names:
        header.append(f"property {'uchar' if table.dtype[name].kind == 'u' else 'float'} {name}")
    header.append("end_header")
    head = ("\n".join(header) + "\n").encode("ascii")
    try:
        with open(path, "wb") as fh:
            fh.write(head)
            if fmt_line.startswith("binary"):
                fh.write(table.tobytes())
            else:
                for row in table:
                    fh.write((" ".join(_ascii_value(row[f]) for f in table.dtype.names)
                              + "\n").encode("ascii"))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _ascii_value(x) -> str:
    if isinstance(x, np.integer):
        return str(int(x))
    return f"{float(x):.9g}"


def export_ply(obj, path, fmt: str = "binary") -> None:
    """Write points ``(pts, colors)``, an EllipsoidSet or a GlobalMap as PLY.

    Ellipsoid exports add the covariance upper triangle per vertex.
    """
    from .merge import EllipsoidSet, GlobalMap

    if isinstance(obj, GlobalMap):
        obj = obj.ellipsoids
    if isinstance(obj, EllipsoidSet):
        write_ply(path, obj.means, obj.colors, obj.covariances, fmt)
    elif isinstance(obj, tuple):
        write_ply(path, obj[0], obj[1] if len(obj) > 1 else None, fmt=fmt)
    else:
        write_ply(path, obj, fmt=fmt)


def read_ply(path):
    """Read the vertex element of an ascii or binary little-endian PLY.

    Returns ``(points float64 (N, 3), colors uint8 (N, 3), table)``; colors
    default to 128 grey when absent.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"missing {path}")
    data = path.read_bytes()
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise MalformedHeader(f"{path}: not a PLY file")
    nl = data.find(b"\n", end)
    body_start = len(data) if nl < 0 else nl + 1
    lines = data[:end].decode("ascii", errors="replace").splitlines()
    fmt = None
    elements = []
    for line in lines[1:]:
        parts = line.split()
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        if parts[0] == "format" and len(parts) >= 2:
            fmt = parts[1]
        elif parts[0] == "element" and len(parts) == 3:
            try:
                elements.append([parts[1], int(parts[2]), []])
            except ValueError:
                raise MalformedHeader(f"{path}: bad element line {line!r}") from None
        elif parts[0] == "property" and elements:
            if parts[1] == "list":
                elements[-1][2].append(("list", None))
            elif len(parts) == 3 and parts[1] in _PLY_TYPES:
                elements[-1][2].append((parts[2], _PLY_TYPES[parts[1]]))
            else:
                raise UnsupportedProperty(f"{path}: property {line!r}")
        else:
            raise MalformedHeader(f"{path}: unexpected header line {line!r}")
    if fmt not in ("ascii", "binary_little_endian"):
        raise UnsupportedProperty(f"{path}: unsupported format {fmt!r}")
    names = [e[0] for e in elements]
    if "vertex" not in names:
        raise MalformedHeader(f"{path}: no vertex element")
    vi = names.index("vertex")
    for e in elements[:vi + 1]:
        if any(t is None for _, t in e[2]):
            raise UnsupportedProperty(f"{path}: list property in element {e[0]!r}")
    _, n, props = elements[vi]
    pnames = [p for p, _ in props]
    if not {"x", "y", "z"} <= set(pnames):
        raise MalformedHeader(f"{path}: vertex element lacks x/y/z")

    if fmt == "ascii":
        dtype = np.dtype([(p, t) for p, t in props])
        text = data[body_start:].decode("ascii").splitlines()
        skip = sum(e[1] for e in elements[:vi])
        rows = text[skip:skip + n]
        if len(rows) < n:
            raise MalformedHeader(f"{path}: expected {n} vertices, found {len(rows)}")
        table = np.zeros(n, dtype=dtype)
        for k, row in enumerate(rows):
            vals = row.split()
            if len(vals) < len(props):
                raise MalformedHeader(f"{path}: short vertex row {k}")
            for (p, _), val in zip(props, vals):
                table[p][k] = float(val)
    else:
        dtype = np.dtype([(p, "<" + t) for p, t in props])
        offset = body_start
        for e in elements[:vi]:
            offset += e[1] * np.dtype([(p, "<" + t) for p, t in e[2]]).itemsize
        need = offset + n * dtype.itemsize
        if len(data) < need:
            raise MalformedHeader(f"{path}: truncated binary body")
        table = np.frombuffer(data, dtype=dtype, count=n, offset=offset)
    pts = np.stack([table["x"], table["y"], table["z"]], 1).astype(np.float64)
    if {"red", "green", "blue"} <= set(pnames):
        cols = np.stack([table["red"], table["green"], table["blue"]], 1).astype(np.uint8)
    else:
        cols = np.full((n, 3), 128, dtype=np.uint8)
    return pts, cols, table


def load_ply_points(path):
    pts, cols, _ = read_ply(path)
    return pts, cols


# ------------------------------------------------------------- graph persistence

def save_graph(graph, directory) -> None:
    """Persist a MapGraph: graph.txt, camera.txt and one kf_XXXX.npz per keyframe."""
    from .graph import format_graph

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "graph.txt").write_text(format_graph(graph))
    intr, lay = graph.intrinsics, graph.layout
    meta = {"fx": intr.fx, "fy": intr.fy, "cx": intr.cx, "cy": intr.cy,
            "width": intr.width, "height": intr.height, "cell_px": lay.cell_px,
            "container_w_px": lay.container_w_px, "container_h_px": lay.container_h_px,
            "offset_u": lay.offset_u, "offset_v": lay.offset_v,
            "delta_update": graph.delta_update, "delta_loop": graph.delta_loop,
            "covis_samples": graph.covis_samples, "stride": graph.stride,
            "depth_min": graph.depth_range[0], "depth_max": graph.depth_range[1],
            "min_support": graph.min_support, "current": graph.current}
    (d / "camera.txt").write_text("".join(f"{k} = {v!r}\n" for k, v in meta.items()))
    for kf in graph.keyframes:
        used = np.flatnonzero(kf.cells.count)
        np.savez(d / f"kf_{kf.id:04d}.npz", cells=used, count=kf.cells.count[used],
                 point_sum=kf.cells.point_sum[used], scatter=kf.cells.scatter[used],
                 color_sum=kf.cells.color_sum[used],
                 frames_integrated=np.array(kf.frames_integrated))


def load_graph(directory):
    from .graph import MapGraph, parse_graph

    d = Path(directory)
    for name in ("graph.txt", "camera.txt"):
        if not (d / name).is_file():
            raise MissingFile(f"missing {d / name}")
    meta = {}
    for n, raw in enumerate((d / "camera.txt").read_text().splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        if "=" not in raw:
            raise MalformedLine(d / "camera.txt", n, raw)
        k, v = (s.strip() for s in raw.split("=", 1))
        meta[k] = None if v == "None" else float(v)
    intr = CameraIntrinsics(meta["fx"], meta["fy"], meta["cx"], meta["cy"],
                            int(meta["width"]), int(meta["height"]))
    lay = ContainerLayout(int(meta["cell_px"]), int(meta["container_w_px"]),
                          int(meta["container_h_px"]), int(meta["offset_u"]),
                          int(meta["offset_v"]))
    graph = MapGraph(intr, lay, meta["delta_update"], meta["delta_loop"],
                     int(meta["covis_samples"]), int(meta["stride"]),
                     (meta["depth_min"], meta["depth_max"]), int(meta["min_support"]))
    kfs, edges = parse_graph((d / "graph.txt").read_text(), str(d / "graph.txt"))
    for kf_id, pose, ts in sorted(kfs, key=lambda x: x[0]):
        if kf_id != len(graph.keyframes):
            raise MalformedLine(d / "graph.txt", kf_id, "keyframe ids must be 0..n-1")
        kf = graph.new_keyframe(pose, ts)
        path = d / f"kf_{kf_id:04d}.npz"
        if not path.is_file():
            raise MissingFile(f"missing {path}")
        with np.load(path) as z:
            used = z["cells"]
            kf.cells.count[used] = z["count"]
            kf.cells.point_sum[used] = z["point_sum"]
            kf.cells.scatter[used] = z["scatter"]
            kf.cells.color_sum[used] = z["color_sum"]
            kf.frames_integrated = int(z["frames_integrated"])
    graph.edges = dict(edges)
    if meta.get("current") is not None and graph.keyframes:
        graph.current = int(meta["current"])
    return graph

