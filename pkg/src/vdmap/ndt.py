"""Incremental Gaussian moments for NDT cells.

A cell keeps the running count ``M``, the point sum ``s_M``, the unnormalized
scatter about the mean and the color sum.  New points arrive in batches of
``N``; the mean, scatter and color recursions below are applied once per
batch.  Covariance is ``scatter / (M - 1)`` and is produced by
:func:`finalize`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyBatch, InsufficientSupport

MIN_SUPPORT = 3
EIGEN_FLOOR = 1e-12

# upper-triangle index pairs of a symmetric 3x3 matrix
_SYM_PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


def _as_points(batch) -> np.ndarray:
    p = np.asarray(batch, dtype=float).reshape(-1, 3)
    if len(p) == 0:
        raise EmptyBatch("batch must contain at least one point")
    return p


@dataclass
class MomentAccumulator:
    count: int = 0
    point_sum: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scatter: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    color_sum: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @classmethod
    def from_points(cls, points, colors=None) -> "MomentAccumulator":
        acc = cls()
        acc.add(points, colors)
        return acc

    @property
    def mean(self) -> np.ndarray:
        if self.count == 0:
            return np.zeros(3)
        return self.point_sum / self.count

    @property
    def color(self) -> np.ndarray:
        if self.count == 0:
            return np.zeros(3)
        return self.color_sum / self.count

    def add(self, points, colors=None) -> None:
        """Fold one batch of points (and optional per-point colors) into the cell."""
        p = _as_points(points)
        c = np.zeros_like(p) if colors is None else np.asarray(colors, dtype=float).reshape(-1, 3)
        if len(c) != len(p):
            raise ValueError("colors and points differ in length")
        scatter = update_scatter(self, p)
        n = len(p)
        self.scatter = scatter
        self.point_sum = self.point_sum + p.sum(axis=0)
        self.color_sum = self.color_sum + c.sum(axis=0)
        self.count += n

    def copy(self) -> "MomentAccumulator":
        return MomentAccumulator(self.count, self.point_sum.copy(), self.scatter.copy(),
                                 self.color_sum.copy())

    def is_empty(self) -> bool:
        return self.count == 0


def update_mean(acc: MomentAccumulator, batch) -> np.ndarray:
    """Mean after adding ``batch``: ``(x_t * M + sum p_n) / (M + N)``."""
    p = _as_points(batch)
    m, n = acc.count, len(p)
    x_t = acc.point_sum / m if m else np.zeros(3)
    return (x_t * m + p.sum(axis=0)) / (m + n)


def update_scatter(acc: MomentAccumulator, batch) -> np.ndarray:
    """Scatter after adding ``batch``.

    ``S + sum (p_n - s_N/N)(p_n - s_N/N)^T
    + M/(N(M+N)) ((N/M) s_M - s_N)((N/M) s_M - s_N)^T``;
    the correction term vanishes for an empty accumulator.
    """
    p = _as_points(batch)
    m, n = acc.count, len(p)
    s_n = p.sum(axis=0)
    centered = p - s_n / n
    out = acc.scatter + centered.T @ centered
    if m > 0:
        diff = (n / m) * acc.point_sum - s_n
        out = out + (m / (n * (m + n))) * np.outer(diff, diff)
    return 0.5 * (out + out.T)


def update_color(acc: MomentAccumulator, colors) -> np.ndarray:
    """Mean color after adding ``colors``: ``(M c_t + s_cN) / (M + N)``."""
    c = _as_points(colors)
    m, n = acc.count, len(c)
    c_t = acc.color_sum / m if m else np.zeros(3)
    return (m * c_t + c.sum(axis=0)) / (m + n)


def merge_accumulators(a: MomentAccumulator, b: MomentAccumulator) -> MomentAccumulator:
    """Moments of the union of two point sets.

    Same algebra as the batch scatter update with ``b`` as the batch, written
    in the symmetric form ``Ma Mb / (Ma + Mb) (mu_a - mu_b)(mu_a - mu_b)^T`` so
    that ``merge(a, b) == merge(b, a)`` bit for bit.
    """
    if b.count == 0:
        return a.copy()
    if a.count == 0:
        return b.copy()
    ma, mb = a.count, b.count
    d = a.point_sum / ma - b.point_sum / mb
    scatter = a.scatter + b.scatter + (ma * mb / (ma + mb)) * np.outer(d, d)
    return MomentAccumulator(ma + mb, a.point_sum + b.point_sum, scatter,
                             a.color_sum + b.color_sum)


@dataclass(eq=False)
class Ellipsoid:
    """Finalized cell Gaussian with cached principal axes (descending)."""

    mean: np.ndarray
    covariance: np.ndarray
    color: np.ndarray
    support: int
    eigenvalues: np.ndarray = None
    eigenvectors: np.ndarray = None

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.covariance = np.asarray(self.covariance, dtype=float)
        self.color = np.asarray(self.color, dtype=float)
        if self.eigenvalues is None or self.eigenvectors is None:
            self.eigenvalues, self.eigenvectors = principal_axes(self.covariance)

    @property
    def axes(self):
        return list(zip(self.eigenvalues, self.eigenvectors.T))

    @property
    def sigma_max(self) -> float:
        return float(np.sqrt(self.eigenvalues[0]))

    def to_moments(self) -> MomentAccumulator:
        m = int(self.support)
        return MomentAccumulator(m, self.mean * m, self.covariance * (m - 1), self.color * m)


def principal_axes(cov):
    """Eigenvalues (descending, floored) and matching eigenvector columns.

    Works on a single 3x3 matrix or a stack of shape (..., 3, 3).
    """
    w, v = np.linalg.eigh(cov)
    w = np.maximum(w[..., ::-1], EIGEN_FLOOR)
    v = v[..., ::-1]
    return w, v


def finalize(acc: MomentAccumulator, min_support: int = MIN_SUPPORT) -> Ellipsoid:
    m = acc.count
    if m < max(min_support, 2):
        raise InsufficientSupport(f"cell has {m} points, needs {min_support}")
    cov = acc.scatter / (m - 1)
    cov = 0.5 * (cov + cov.T)
    color = np.clip(acc.color_sum / m, 0.0, 255.0)
    return Ellipsoid(acc.point_sum / m, cov, color, m)


class CellMoments:
    """Dense array of accumulators addressed by integer cell index.

    Shared by keyframe containers and the NDT voxel baseline so both run the
    same batch update, vectorized over all touched cells of a frame.
    """

    def __init__(self, n_cells: int):
        self.count = np.zeros(n_cells, dtype=np.int64)
        self.point_sum = np.zeros((n_cells, 3))
        self.scatter = np.zeros((n_cells, 3, 3))
        self.color_sum = np.zeros((n_cells, 3))

    def __len__(self):
        return len(self.count)

    def grow(self, n_cells: int) -> None:
        extra = n_cells - len(self.count)
        if extra <= 0:
            return
        self.count = np.concatenate([self.count, np.zeros(extra, dtype=np.int64)])
        self.point_sum = np.concatenate([self.point_sum, np.zeros((extra, 3))])
        self.scatter = np.concatenate([self.scatter, np.zeros((extra, 3, 3))])
        self.color_sum = np.concatenate([self.color_sum, np.zeros((extra, 3))])

    def get(self, k: int) -> MomentAccumulator:
        return MomentAccumulator(int(self.count[k]), self.point_sum[k].copy(),
                                 self.scatter[k].copy(), self.color_sum[k].copy())

    def put(self, k: int, acc: MomentAccumulator) -> None:
        self.count[k] = acc.count
        self.point_sum[k] = acc.point_sum
        self.scatter[k] = acc.scatter
        self.color_sum[k] = acc.color_sum

    def reset(self, cells) -> None:
        self.count[cells] = 0
        self.point_sum[cells] = 0.0
        self.scatter[cells] = 0.0
        self.color_sum[cells] = 0.0

    def accumulate(self, cells, points, colors) -> np.ndarray:
        """Apply one batch update per touched cell; returns the touched cell ids.

        ``cells[n]`` names the cell of ``points[n]``; all points of a cell form
        that cell's batch.
        """
        cells = np.asarray(cells, dtype=np.int64)
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        colors = np.asarray(colors, dtype=float).reshape(-1, 3)
        if len(cells) == 0:
            return cells
        touched, inv = np.unique(cells, return_inverse=True)
        k = len(touched)
        n = np.bincount(inv, minlength=k).astype(float)
        s_n = np.stack([np.bincount(inv, points[:, a], minlength=k) for a in range(3)], axis=1)
        c_n = np.stack([np.bincount(inv, colors[:, a], minlength=k) for a in range(3)], axis=1)
        centered = points - (s_n / n[:, None])[inv]
        batch_scatter = np.empty((k, 3, 3))
        for a, b in _SYM_PAIRS:
            s = np.bincount(inv, centered[:, a] * centered[:, b], minlength=k)
            batch_scatter[:, a, b] = s
            batch_scatter[:, b, a] = s

        m = self.count[touched].astype(float)
        s_m = self.point_sum[touched]
        has_prior = m > 0
        safe_m = np.where(has_prior, m, 1.0)
        diff = (n / safe_m)[:, None] * s_m - s_n
        coef = np.where(has_prior, m / (n * (m + n)), 0.0)
        correction = coef[:, None, None] * diff[:, :, None] * diff[:, None, :]

        self.scatter[touched] += batch_scatter + correction
        self.point_sum[touched] = s_m + s_n
        self.color_sum[touched] += c_n
        self.count[touched] += n.astype(np.int64)
        return touched

    def finalize_all(self, min_support: int = MIN_SUPPORT):
        """Finalize every cell with enough support.

        Returns ``(cells, means, covariances, colors, support, eigenvalues,
        eigenvectors)`` in ascending cell order.
        """
        cells = np.flatnonzero(self.count >= max(min_support, 2))
        m = self.count[cells].astype(float)
        means = self.point_sum[cells] / m[:, None]
        cov = self.scatter[cells] / (m - 1)[:, None, None]
        cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
        colors = np.clip(self.color_sum[cells] / m[:, None], 0.0, 255.0)
        if len(cells):
            w, v = principal_axes(cov)
        else:
            w, v = np.zeros((0, 3)), np.zeros((0, 3, 3))
        return cells, means, cov, colors, self.count[cells].copy(), w, v
