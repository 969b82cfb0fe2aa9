"""Depth-dependent RGB-D sensor noise and the elongated-ellipsoid test."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveDepth
from .ndt import Ellipsoid

DEFAULT_K = 3.0


@dataclass(frozen=True)
class NoiseModel:
    """Quadratic axial noise ``a0 + a1 dz + a2 dz^2`` with ``dz = max(z - z0, 0)``.

    Defaults are typical structured-light (Kinect-class) values. The lateral
    term ``b * z`` is kept for completeness.
    """

    a0: float = 0.0012
    a1: float = 0.0
    a2: float = 0.0019
    z0: float = 0.4
    b: float = 0.0015

    def __post_init__(self):
        if self.a0 <= 0:
            raise ValueError("a0 must be positive")
        if self.a1 < 0 or self.a2 < 0:
            raise ValueError("a1 and a2 must be non-negative for a monotone model")

    def axial_sigma(self, z):
        return axial_sigma(self, z)

    def lateral_sigma(self, z):
        return self.b * np.asarray(z, dtype=float)


def axial_sigma(model: NoiseModel, z):
    """Axial standard deviation in meters; accepts scalars or arrays."""
    z_arr = np.asarray(z, dtype=float)
    if np.any(~(z_arr > 0)):
        raise NonPositiveDepth(f"depth must be positive, got {z}")
    dz = np.maximum(z_arr - model.z0, 0.0)
    sigma = np.maximum(model.a0 + model.a1 * dz + model.a2 * dz * dz, model.a0)
    return float(sigma) if sigma.ndim == 0 else sigma


def elongated_mask(model: NoiseModel, lambda_max, z, k: float = DEFAULT_K) -> np.ndarray:
    """Vectorized form of :func:`is_elongated` over arrays of ``lambda_max`` and depths."""
    return np.sqrt(np.maximum(lambda_max, 0.0)) > k * axial_sigma(model, np.asarray(z, dtype=float))


def is_elongated(model: NoiseModel, e: Ellipsoid, z: float, k: float = DEFAULT_K) -> bool:
    if not k > 0:
        raise ValueError("k must be positive")
    return bool(elongated_mask(model, e.eigenvalues[0], z, k))
