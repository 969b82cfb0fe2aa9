"""Run configuration: plain ``key = value`` text with '#' comments."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError, MissingFile
from .geometry import CameraIntrinsics, ContainerLayout
from .merge import ClusterParams
from .noise import NoiseModel


@dataclass
class RunConfig:
    # camera
    fx: float = 525.0
    fy: float = 525.0
    cx: float = 319.5
    cy: float = 239.5
    width: int = 640
    height: int = 480
    # keyframe container
    cell_px: int = 5
    container_w_px: int = 1280
    container_h_px: int = 960
    stride: int = 1
    depth_min: float = 0.3
    depth_max: float = 10.0
    depth_scale: float = 5000.0
    min_support: int = 3
    # graph
    delta_update: float = 0.8
    delta_loop: float = 0.6
    covis_samples: int = 768
    assoc_tolerance: float = 0.02
    # noise model and filter
    noise_a0: float = 0.0012
    noise_a1: float = 0.0
    noise_a2: float = 0.0019
    noise_z0: float = 0.4
    noise_b: float = 0.0015
    filter_k: float = 3.0
    # merging
    bandwidth: float = 0.25
    max_iterations: int = 50
    convergence_eps: float = 1e-4
    occlusion_depth_tol: float = 0.1
    group_max_dist: float = 1.0
    group_max_angle: float = math.radians(30.0)
    # baselines and outputs
    voxel_size: float = 0.1
    occupancy_threshold: float = 0.0
    baseline_stride: int = 2
    samples_per_ellipsoid: int = 0
    reference_spacing: float = 0.005
    synth_frames: int = 6
    noise_multiplier: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if f.type in ("int", int) and not isinstance(v, int):
                raise ConfigError(f"{f.name} must be an integer")
        try:
            self.intrinsics()
            self.layout()
            self.noise_model()
            self.cluster_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        checks = [
            (self.stride >= 1, "stride must be >= 1"),
            (self.baseline_stride >= 1, "baseline_stride must be >= 1"),
            (0 < self.depth_min < self.depth_max, "need 0 < depth_min < depth_max"),
            (self.depth_scale > 0, "depth_scale must be positive"),
            (self.min_support >= 2, "min_support must be >= 2"),
            (0 < self.delta_update < 1, "delta_update must lie in (0, 1)"),
            (0 < self.delta_loop < 1, "delta_loop must lie in (0, 1)"),
            (self.covis_samples >= 100, "covis_samples must be >= 100"),
            (self.assoc_tolerance > 0, "assoc_tolerance must be positive"),
            (self.filter_k > 0, "filter_k must be positive"),
            (self.voxel_size > 0, "voxel_size must be positive"),
            (self.samples_per_ellipsoid >= 0, "samples_per_ellipsoid must be >= 0"),
            (self.reference_spacing > 0, "reference_spacing must be positive"),
            (self.synth_frames >= 1, "synth_frames must be >= 1"),
            (self.noise_multiplier >= 0, "noise_multiplier must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(self.fx, self.fy, self.cx, self.cy, self.width, self.height)

    def layout(self) -> ContainerLayout:
        return ContainerLayout.for_source(self.width, self.height, self.cell_px,
                                          self.container_w_px, self.container_h_px)

    def noise_model(self) -> NoiseModel:
        return NoiseModel(self.noise_a0, self.noise_a1, self.noise_a2, self.noise_z0, self.noise_b)

    def cluster_params(self) -> ClusterParams:
        return ClusterParams(self.bandwidth, self.max_iterations, self.convergence_eps,
                             self.occlusion_depth_tol, "same-cell", self.group_max_dist,
                             self.group_max_angle)

    @property
    def depth_range(self):
        return (self.depth_min, self.depth_max)

    def make_graph(self):
        from .graph import MapGraph

        return MapGraph(self.intrinsics(), self.layout(), self.delta_update, self.delta_loop,
                        self.covis_samples, self.stride, self.depth_range, self.min_support)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)!r}\n" for f in fields(self))

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def _coerce(name: str, ftype, raw: str, where: str):
    try:
        if ftype in ("int", int):
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"{where}: {name} expects a number, got {raw!r}") from None


def parse_config(text: str, path: str = "<config>", base: RunConfig = None) -> RunConfig:
    types = {f.name: f.type for f in fields(RunConfig)}
    values = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        values[key] = _coerce(key, types[key], val, f"{path}:{n}")
    try:
        return dataclasses.replace(base or RunConfig(), **values)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def load_config(path=None, overrides: dict = None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise MissingFile(f"missing config file {p}")
        cfg = parse_config(p.read_text(), str(p))
    if overrides:
        overrides = {k: v for k, v in overrides.items() if v is not None}
        unknown = set(overrides) - {f.name for f in fields(RunConfig)}
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}")
        cfg = dataclasses.replace(cfg, **overrides)
    return cfg
