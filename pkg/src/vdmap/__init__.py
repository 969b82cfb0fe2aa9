"""View-dependent keyframe NDT mapping."""

from .errors import VdmapError
from .geometry import CameraIntrinsics, ContainerLayout, Se3Pose
from .graph import MapGraph
from .keyframe import Keyframe, RgbdFrame
from .merge import ClusterParams, GlobalMap, build_global_map
from .ndt import Ellipsoid, MomentAccumulator
from .noise import NoiseModel

__version__ = "0.1.0"
