"""Global map assembly from keyframe local maps.

Local maps are split into groups of covisible keyframes.  Within a group
every ellipsoid is reprojected into the group center's container; ellipsoids
sharing a cell are clustered by flat-kernel mean shift and each cluster is
pooled into one Gaussian.  A second pass, over groups that also admit
keyframes close in position and heading, keeps only the most precise
ellipsoid among those that land in the same cell at nearly the same depth.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyGraph
from .geometry import cell_indices, project_points
from .graph import MapGraph, neighbor_groups
from .ndt import Ellipsoid, MomentAccumulator, merge_accumulators, principal_axes

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClusterParams:
    bandwidth: float = 0.25
    max_iterations: int = 50
    convergence_eps: float = 1e-4
    occlusion_depth_tol: float = 0.1
    occlusion_cell_rule: str = "same-cell"
    group_max_dist: float = 1.0
    group_max_angle: float = np.deg2rad(30.0)

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if not (self.convergence_eps > 0 and self.occlusion_depth_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.occlusion_cell_rule != "same-cell":
            raise ValueError(f"unsupported occlusion rule {self.occlusion_cell_rule!r}")


class EllipsoidSet:
    """Array-backed collection of ellipsoids with provenance.

    ``keyframe``, ``cell`` and ``depth`` record the keyframe an ellipsoid
    came from, its cell there and its depth in that keyframe's camera.
    """

    _fields = ("means", "covariances", "colors", "support", "eigenvalues", "eigenvectors",
               "keyframe", "cell", "depth")

    def __init__(self, means=None, covariances=None, colors=None, support=None,
                 eigenvalues=None, eigenvectors=None, keyframe=None, cell=None, depth=None):
        n = 0 if means is None else len(means)
        self.means = np.zeros((0, 3)) if means is None else np.asarray(means, dtype=float)
        self.covariances = (np.zeros((n, 3, 3)) if covariances is None
                            else np.asarray(covariances, dtype=float))
        self.colors = np.zeros((n, 3)) if colors is None else np.asarray(colors, dtype=float)
        self.support = (np.zeros(n, dtype=np.int64) if support is None
                        else np.asarray(support, dtype=np.int64))
        if eigenvalues is None or eigenvectors is None:
            if n:
                eigenvalues, eigenvectors = principal_axes(self.covariances)
            else:
                eigenvalues, eigenvectors = np.zeros((0, 3)), np.zeros((0, 3, 3))
        self.eigenvalues = np.asarray(eigenvalues, dtype=float)
        self.eigenvectors = np.asarray(eigenvectors, dtype=float)
        self.keyframe = (np.full(n, -1, dtype=np.int64) if keyframe is None
                         else np.asarray(keyframe, dtype=np.int64))
        self.cell = (np.full((n, 2), -1, dtype=np.int64) if cell is None
                     else np.asarray(cell, dtype=np.int64).reshape(n, 2))
        self.depth = np.zeros(n) if depth is None else np.asarray(depth, dtype=float)

    def __len__(self):
        return len(self.means)

    def __getitem__(self, k) -> Ellipsoid:
        return Ellipsoid(self.means[k], self.covariances[k], self.colors[k],
                         int(self.support[k]), self.eigenvalues[k], self.eigenvectors[k])

    def __iter__(self):
        return (self[k] for k in range(len(self)))

    @property
    def sigma_max(self) -> np.ndarray:
        return np.sqrt(self.eigenvalues[:, 0]) if len(self) else np.zeros(0)

    def take(self, idx) -> "EllipsoidSet":
        return EllipsoidSet(**{f: getattr(self, f)[idx] for f in self._fields})

    @classmethod
    def concat(cls, sets) -> "EllipsoidSet":
        sets = [s for s in sets if len(s)]
        if not sets:
            return cls()
        return cls(**{f: np.concatenate([getattr(s, f) for s in sets]) for f in cls._fields})

    @classmethod
    def from_list(cls, ellipsoids) -> "EllipsoidSet":
        ellipsoids = list(ellipsoids)
        if not ellipsoids:
            return cls()
        return cls(np.array([e.mean for e in ellipsoids]),
                   np.array([e.covariance for e in ellipsoids]),
                   np.array([e.color for e in ellipsoids]),
                   np.array([e.support for e in ellipsoids]),
                   np.array([e.eigenvalues for e in ellipsoids]),
                   np.array([e.eigenvectors for e in ellipsoids]))


@dataclass
class GlobalMap:
    ellipsoids: EllipsoidSet
    input_count: int
    output_count: int
    generation_seconds: float
    merge_groups: list = field(default_factory=list)
    occlusion_groups: list = field(default_factory=list)
    clusters_merged: int = 0
    occluded_removed: int = 0


def keyframe_world_ellipsoids(kf) -> EllipsoidSet:
    cells, means, cov, colors, support, w, v = kf.ellipsoid_arrays()
    r, t = kf.pose.rotation, kf.pose.translation
    ii, jj = kf.layout.unflat(cells)
    return EllipsoidSet(means @ r.T + t, r @ cov @ r.T, colors, support, w, r @ v,
                        np.full(len(cells), kf.id), np.stack([ii, jj], axis=1), means[:, 2])


def ellipsoids_to_world(graph: MapGraph) -> EllipsoidSet:
    """All supported ellipsoids in the world frame, keyframe order then cell order."""
    return EllipsoidSet.concat([keyframe_world_ellipsoids(kf) for kf in graph.keyframes])


@dataclass
class GroupBins:
    """Ellipsoids of a group seen from the group center.

    ``bins`` is the flat center cell of each ellipsoid, -1 when it falls
    behind the center camera or outside its container (passed through).
    """

    center: int
    ellipsoids: EllipsoidSet
    bins: np.ndarray
    depth: np.ndarray

    def members(self, flat_cell: int) -> np.ndarray:
        return np.flatnonzero(self.bins == flat_cell)

    @property
    def binned(self) -> np.ndarray:
        return self.bins >= 0


def _project_into(graph: MapGraph, center: int, means_world: np.ndarray):
    ckf = graph.keyframe(center)
    pc = ckf.pose.inverse().apply(means_world)
    u, v, z, ok = project_points(ckf.intrinsics, pc)
    i, j, inside = cell_indices(ckf.layout, u, v)
    binned = ok & inside
    flat = np.where(binned, ckf.layout.flat(i, j), -1)
    return flat, z


def reproject_group(graph: MapGraph, group, center: int, world_sets=None) -> GroupBins:
    if center not in group:
        raise ValueError("center must belong to the group")
    for g in group:
        graph.keyframe(g)
    if world_sets is None:
        world_sets = {g: keyframe_world_ellipsoids(graph.keyframe(g)) for g in group}
    es = EllipsoidSet.concat([world_sets[g] for g in sorted(group)])
    flat, z = _project_into(graph, center, es.means)
    return GroupBins(center, es, flat, z)


def _mean_shift_batched(x: np.ndarray, mask: np.ndarray, params: ClusterParams):
    """Flat-kernel mean shift on a batch of padded point sets.

    ``x`` is (B, K, 3), ``mask`` (B, K) marks real points.  Returns labels
    (B, K), -1 on padding, numbered per set in order of first appearance.
    """
    bw = params.bandwidth
    bw2 = bw * bw
    b, k = mask.shape
    y = x.copy()
    maskf = mask.astype(float)
    for _ in range(params.max_iterations):
        d2 = ((y[:, :, None, :] - x[:, None, :, :]) ** 2).sum(-1)
        w = (d2 <= bw2) * maskf[:, None, :]
        cnt = w.sum(-1)
        cnt[cnt == 0] = 1.0
        y_new = (w @ x) / cnt[:, :, None]
        y_new[~mask] = x[~mask]
        shift = np.sqrt(((y_new - y) ** 2).sum(-1))
        y = y_new
        if shift.max(initial=0.0) < params.convergence_eps:
            break

    # greedy mode merge: a trajectory joins the first earlier leader within bw/2
    labels = np.full((b, k), -1, dtype=np.int64)
    leader = np.zeros((b, k), dtype=bool)
    next_label = np.zeros(b, dtype=np.int64)
    rows = np.arange(b)
    merge_r2 = (0.5 * bw) ** 2
    for col in range(k):
        active = mask[:, col]
        if col:
            d2 = ((y[:, :col, :] - y[:, col:col + 1, :]) ** 2).sum(-1)
            cand = leader[:, :col] & (d2 < merge_r2)
            has = cand.any(1) & active
            first = cand.argmax(1)
            labels[has, col] = labels[rows[has], first[has]]
        else:
            has = np.zeros(b, dtype=bool)
        new = active & ~has
        labels[new, col] = next_label[new]
        leader[new, col] = True
        next_label[new] += 1

    # each member must sit within bw of its cluster mode (the leader's mode)
    modes = np.zeros((b, 2 * k, 3))
    for col in range(k):
        sel = leader[:, col]
        modes[rows[sel], labels[sel, col]] = y[sel, col]
    own_mode = modes[rows[:, None], np.maximum(labels, 0)]
    far = mask & (((x - own_mode) ** 2).sum(-1) > bw2)
    for bi, col in zip(*np.nonzero(far)):
        n_modes = next_label[bi]
        d2 = ((modes[bi, :n_modes] - x[bi, col]) ** 2).sum(-1)
        ok = np.flatnonzero(d2 <= bw2)
        if len(ok):
            labels[bi, col] = ok[np.argmin(d2[ok])]
        else:
            labels[bi, col] = n_modes
            modes[bi, n_modes] = x[bi, col]
            next_label[bi] += 1
    for bi in np.unique(np.nonzero(far)[0]):
        # reassignment can empty a cluster; renumber in first-appearance order
        row = labels[bi][mask[bi]]
        _, first = np.unique(row, return_index=True)
        old = row[np.sort(first)]
        remap = np.full(2 * k, -1, dtype=np.int64)
        remap[old] = np.arange(len(old))
        new_modes = np.zeros((2 * k, 3))
        new_modes[:len(old)] = modes[bi, old]
        modes[bi] = new_modes
        labels[bi][mask[bi]] = remap[row]
    return labels, modes


def mean_shift_cluster(points, params: ClusterParams = ClusterParams()) -> np.ndarray:
    """Cluster labels (0..n_clusters-1, first-appearance order) for one point set."""
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(p) == 0:
        raise ValueError("points must be non-empty")
    labels, _ = _mean_shift_batched(p[None], np.ones((1, len(p)), dtype=bool), params)
    return labels[0]


def mean_shift_modes(points, params: ClusterParams = ClusterParams()):
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    labels, modes = _mean_shift_batched(p[None], np.ones((1, len(p)), dtype=bool), params)
    return labels[0], modes[0, :labels[0].max() + 1]


def _cluster_bins(bins: np.ndarray, points: np.ndarray, params: ClusterParams,
                  max_elems: int = 2_000_000) -> np.ndarray:
    """Cluster points bin by bin; returns a global cluster id per binned point.

    Bins are processed in batches of equal size so the mean shift runs
    vectorized.  Ids follow (bin, first appearance) order.  Points with
    ``bins < 0`` get -1.
    """
    out = np.full(len(bins), -1, dtype=np.int64)
    idx = np.flatnonzero(bins >= 0)
    if len(idx) == 0:
        return out
    order = idx[np.argsort(bins[idx], kind="stable")]
    sorted_bins = bins[order]
    starts = np.flatnonzero(np.r_[True, sorted_bins[1:] != sorted_bins[:-1]])
    sizes = np.diff(np.r_[starts, len(order)])
    local = np.zeros(len(order), dtype=np.int64)
    n_clusters = np.ones(len(starts), dtype=np.int64)
    for size in np.unique(sizes):
        if size == 1:
            continue
        which = np.flatnonzero(sizes == size)
        chunk = max(1, max_elems // int(size * size))
        for c0 in range(0, len(which), chunk):
            sel = which[c0:c0 + chunk]
            pos = starts[sel][:, None] + np.arange(size)[None, :]
            x = points[order[pos]]
            labels, _ = _mean_shift_batched(x, np.ones(pos.shape, dtype=bool), params)
            local[pos] = labels
            n_clusters[sel] = labels.max(1) + 1
    offsets = np.r_[0, np.cumsum(n_clusters)[:-1]]
    bin_of = np.repeat(np.arange(len(starts)), sizes)
    out[order] = offsets[bin_of] + local
    return out


def _pool(es: EllipsoidSet, cluster: np.ndarray, n: int):
    """Support-weighted pooled moments per cluster id (0..n-1)."""
    m = es.support.astype(float)
    tot = np.bincount(cluster, m, minlength=n)
    mean = np.stack([np.bincount(cluster, m * es.means[:, a], minlength=n) for a in range(3)], 1)
    mean /= tot[:, None]
    color = np.stack([np.bincount(cluster, m * es.colors[:, a], minlength=n) for a in range(3)], 1)
    color /= tot[:, None]
    d = es.means - mean[cluster]
    per = (m - 1.0)[:, None, None] * es.covariances + m[:, None, None] * d[:, :, None] * d[:, None, :]
    scatter = np.zeros((n, 3, 3))
    np.add.at(scatter, cluster, per)
    cov = scatter / (tot - 1.0)[:, None, None]
    cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
    return mean, cov, np.clip(color, 0.0, 255.0), tot.astype(np.int64)


def merge_cluster(members) -> Ellipsoid:
    """Pool a cluster of ellipsoids into one via exact moment merging."""
    members = list(members)
    if not members:
        raise ValueError("members must be non-empty")
    if len(members) == 1:
        return members[0]
    acc = MomentAccumulator()
    for e in members:
        acc = merge_accumulators(acc, e.to_moments())
    m = acc.count
    cov = acc.scatter / (m - 1)
    return Ellipsoid(acc.point_sum / m, 0.5 * (cov + cov.T),
                     np.clip(acc.color_sum / m, 0.0, 255.0), m)


def merge_group(graph: MapGraph, gb: GroupBins, params: ClusterParams):
    """Cluster and pool one reprojected group; returns ``(EllipsoidSet, n_merged_clusters)``."""
    es = gb.ellipsoids
    cluster = _cluster_bins(gb.bins, es.means, params)
    binned = cluster >= 0
    passthrough = es.take(np.flatnonzero(~binned))
    if not binned.any():
        return passthrough, 0
    cid = cluster[binned]
    sub = es.take(np.flatnonzero(binned))
    n = int(cid.max()) + 1
    sizes = np.bincount(cid, minlength=n)
    single = sizes[cid] == 1

    singles = sub.take(np.flatnonzero(single))
    multi_idx = np.flatnonzero(~single)
    merged = EllipsoidSet()
    if len(multi_idx):
        uniq, remap = np.unique(cid[multi_idx], return_inverse=True)
        sm = sub.take(multi_idx)
        mean, cov, color, support = _pool(sm, remap, len(uniq))
        ckf = graph.keyframe(gb.center)
        bins_of = np.zeros(len(uniq), dtype=np.int64)
        bins_of[remap] = gb.bins[binned][multi_idx]
        ii, jj = ckf.layout.unflat(bins_of)
        depth = ckf.pose.inverse().apply(mean)[:, 2]
        merged = EllipsoidSet(mean, cov, color, support, keyframe=np.full(len(uniq), gb.center),
                              cell=np.stack([ii, jj], 1), depth=depth)
    out = EllipsoidSet.concat([merged, singles, passthrough])
    return out, len(merged)


def remove_occluded(graph: MapGraph, ellipsoids: EllipsoidSet, groups,
                    params: ClusterParams = ClusterParams()):
    """Keep only the most precise ellipsoid of each same-cell, same-depth rivalry set.

    ``groups`` is a sequence of ``(center, member_ids)``; an ellipsoid takes
    part in a group when its provenance keyframe is a member.  Returns the
    filtered set and the boolean keep mask.
    """
    n = len(ellipsoids)
    alive = np.ones(n, dtype=bool)
    if n == 0:
        return ellipsoids, alive
    sig = ellipsoids.sigma_max
    tol = params.occlusion_depth_tol
    for center, members in groups:
        sel = np.flatnonzero(alive & np.isin(ellipsoids.keyframe, list(members)))
        if len(sel) < 2:
            continue
        flat, z = _project_into(graph, center, ellipsoids.means[sel])
        ok = flat >= 0
        sel, flat, z = sel[ok], flat[ok], z[ok]
        if len(sel) < 2:
            continue
        order = np.lexsort((z, flat))
        sel, flat, z = sel[order], flat[order], z[order]
        new_set = np.r_[True, (flat[1:] != flat[:-1]) | (np.diff(z) > tol)]
        set_id = np.cumsum(new_set) - 1
        set_size = np.bincount(set_id)
        contested = set_size[set_id] > 1
        if not contested.any():
            continue
        s_sel, s_id = sel[contested], set_id[contested]
        # winner per set: smallest sigma_max, ties to the lowest index
        rank = np.lexsort((s_sel, sig[s_sel], s_id))
        s_sel, s_id = s_sel[rank], s_id[rank]
        first = np.r_[True, s_id[1:] != s_id[:-1]]
        alive[s_sel[~first]] = False
    return ellipsoids.take(np.flatnonzero(alive)), alive


def merge_groups_cover(graph: MapGraph) -> list[tuple[int, list[int]]]:
    """Greedy cover of keyframes by covisibility groups, each keyframe used once."""
    unassigned = set(range(len(graph)))
    nbrs = {k: set(graph.neighbors(k)) for k in unassigned}
    groups = []
    while unassigned:
        center = min(unassigned, key=lambda k: (-len(nbrs[k] & unassigned), k))
        members = sorted({center} | (nbrs[center] & unassigned))
        groups.append((center, members))
        unassigned -= set(members)
    return groups


def occlusion_groups(graph: MapGraph, params: ClusterParams) -> list[tuple[int, list[int]]]:
    return [(kf.id, neighbor_groups(graph, kf.id, params.group_max_dist, params.group_max_angle))
            for kf in graph.keyframes]


def build_global_map(graph: MapGraph, params: ClusterParams = ClusterParams()) -> GlobalMap:
    if len(graph) == 0:
        raise EmptyGraph("graph has no keyframes")
    t0 = time.perf_counter()
    world = {kf.id: keyframe_world_ellipsoids(kf) for kf in graph.keyframes}
    input_count = sum(len(s) for s in world.values())

    mgroups = merge_groups_cover(graph)
    parts, n_merged = [], 0
    for center, members in mgroups:
        gb = reproject_group(graph, members, center, world)
        out, k = merge_group(graph, gb, params)
        parts.append(out)
        n_merged += k
    merged = EllipsoidSet.concat(parts)

    ogroups = occlusion_groups(graph, params)
    kept, alive = remove_occluded(graph, merged, ogroups, params)
    seconds = time.perf_counter() - t0
    log.info("global map: %d -> %d ellipsoids (%d merged clusters, %d occluded) in %.2fs",
             input_count, len(kept), n_merged, int((~alive).sum()), seconds)
    return GlobalMap(kept, input_count, len(kept), seconds, mgroups, ogroups,
                     n_merged, int((~alive).sum()))


def sample_point_cloud(gmap, per_ellipsoid: int = 1, seed: int = 0):
    """Draw ``per_ellipsoid`` colored samples from every ellipsoid's Gaussian.

    Returns ``(points (N, 3), colors (N, 3) uint8)``, ellipsoid-major order.
    """
    if per_ellipsoid < 1:
        raise ValueError("per_ellipsoid must be >= 1")
    es = gmap.ellipsoids if isinstance(gmap, GlobalMap) else gmap
    n = len(es)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, per_ellipsoid, 3))
    scale = es.eigenvectors * np.sqrt(es.eigenvalues)[:, None, :]
    pts = es.means[:, None, :] + np.einsum("nij,nkj->nki", scale, z)
    colors = np.repeat(np.rint(es.colors).astype(np.uint8), per_ellipsoid, axis=0)
    return pts.reshape(-1, 3), colors
