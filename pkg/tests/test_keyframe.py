import numpy as np
import pytest

from vdmap import dataio, scenes
from vdmap.errors import DimensionMismatch
from vdmap.geometry import (CameraIntrinsics, Se3Pose, cell_indices, pixel_grid, project_points,
                            unproject_pixels)
from vdmap.keyframe import Keyframe, RgbdFrame, filter_elongated, keyframe_ellipsoids
from vdmap.noise import NoiseModel, axial_sigma


def new_kf(pose=None):
    return Keyframe(0, pose or Se3Pose.identity())


def test_plane_cells_sit_on_plane(plane_frame):
    kf = new_kf()
    stats = kf.integrate_frame(plane_frame)
    assert stats.points_used == 640 * 480 and stats.points_rejected == 0
    els = keyframe_ellipsoids(kf)
    assert len(els) == stats.cells_touched == 128 * 96
    means = np.array([e.mean for _, e in els])
    assert np.abs(means[:, 2] - 2.0).max() < 1e-6
    # every cell reprojects back to its own index
    u, v, _, _ = project_points(kf.intrinsics, means)
    i, j, _ = cell_indices(kf.layout, u, v)
    assert np.array_equal(np.c_[i, j], np.array([c for c, _ in els]))


def test_zero_depth_frame_changes_nothing():
    intr = CameraIntrinsics()
    frame = RgbdFrame(0.0, np.zeros((480, 640, 3), np.uint8), np.zeros((480, 640)),
                      Se3Pose.identity())
    kf = new_kf()
    stats = kf.integrate_frame(frame)
    assert (stats.points_used, stats.points_rejected, stats.cells_touched) == (0, 0, 0)
    assert kf.cells.count.sum() == 0
    assert intr.width == 640


def test_repeat_integration_doubles_counts(plane_frame):
    kf = new_kf()
    kf.integrate_frame(plane_frame)
    before = kf.ellipsoid_arrays()
    kf.integrate_frame(plane_frame)
    after = kf.ellipsoid_arrays()
    assert np.array_equal(before[0], after[0])
    assert np.allclose(before[1], after[1], atol=1e-9, rtol=0)
    assert np.array_equal(after[4], 2 * before[4])


def test_own_pose_touches_only_source_footprint(rng):
    frame = dataio.render_synthetic(scenes.desk_scene(1.0), scenes.sweep_poses(1)[0], seed=3)
    kf = new_kf(frame.pose)
    kf.integrate_frame(frame)
    ii, jj = kf.layout.unflat(np.flatnonzero(kf.cells.count))
    assert ii.min() >= 64 and ii.max() < 64 + 128
    assert jj.min() >= 48 and jj.max() < 48 + 96


def test_dimension_mismatch():
    frame = RgbdFrame(0.0, np.zeros((10, 10, 3), np.uint8), np.ones((10, 10)), Se3Pose.identity())
    with pytest.raises(DimensionMismatch):
        new_kf().integrate_frame(frame)
    with pytest.raises(DimensionMismatch):
        RgbdFrame(0.0, np.zeros((10, 11, 3), np.uint8), np.ones((10, 10)), Se3Pose.identity())


def test_cell_count_matches_projected_samples(plane_frame):
    kf = new_kf()
    kf.integrate_frame(plane_frame)
    # oracle: count pixels per 5 px cell directly
    u, v = pixel_grid(640, 480)
    cells = set(zip((u + 320) // 5, (v + 240) // 5))
    assert len(kf.ellipsoids()) == len(cells)
    assert [c for c, _ in kf.ellipsoids()] == [c for c, _ in kf.ellipsoids()]


def test_clean_plane_filter_removes_nothing(plane_frame):
    kf = new_kf()
    kf.integrate_frame(plane_frame)
    assert filter_elongated(kf, NoiseModel(), 3.0) == 0


def test_step_edge_cell_removed_neighbors_kept():
    intr = CameraIntrinsics()
    # edge at u = 322.5 falls in the middle of cell column 128
    edge_x = (322.5 - intr.cx) / intr.fx
    frame = dataio.render_synthetic(scenes.step_edge(1.0, 3.0, edge_x), Se3Pose.identity(), intr)
    kf = new_kf()
    kf.integrate_frame(frame)
    e_edge = kf.cell(128, 96)
    assert e_edge.scatter[2, 2] / (e_edge.count - 1) > 0.5
    removed = filter_elongated(kf, NoiseModel(), 3.0)
    assert removed == 96
    remaining = {c for c, _ in kf.ellipsoids()}
    assert (128, 96) not in remaining
    assert (127, 96) in remaining and (129, 96) in remaining


def test_infinite_k_disables_filter():
    frame = dataio.render_synthetic(scenes.step_edge(1.0, 3.0, 0.0057), Se3Pose.identity())
    kf = new_kf()
    kf.integrate_frame(frame)
    assert filter_elongated(kf, NoiseModel(), 1e300) == 0


def test_remaining_ellipsoids_within_noise_bound():
    frame = dataio.render_synthetic(scenes.desk_scene(1.0), scenes.sweep_poses(1)[0], seed=1)
    kf = new_kf(frame.pose)
    kf.integrate_frame(frame)
    model = NoiseModel()
    filter_elongated(kf, model, 3.0)
    _, means, _, _, _, w, _ = kf.ellipsoid_arrays()
    assert len(means)
    assert np.all(np.sqrt(w[:, 0]) <= 3.0 * axial_sigma(model, means[:, 2]))


def test_empty_keyframe_has_no_ellipsoids():
    assert keyframe_ellipsoids(new_kf()) == []


def test_size_grows_with_depth_on_tilted_plane():
    model = NoiseModel()
    frame = dataio.render_synthetic(scenes.tilted_plane(noise_multiplier=1.0), Se3Pose.identity(),
                                    seed=0, noise=model)
    kf = new_kf()
    kf.integrate_frame(frame)
    _, means, _, _, _, w, _ = kf.ellipsoid_arrays()
    z = means[:, 2]
    sel = (z >= 0.5) & (z < 5.0)
    b = ((z[sel] - 0.5) // 0.5).astype(int)
    vol = np.sqrt(w[sel]).prod(1)
    per_bin = [vol[b == k].mean() for k in np.unique(b)]
    assert np.all(np.diff(per_bin) >= 0)


def test_frame_points_unproject_valid_pixels(plane_frame):
    intr = CameraIntrinsics()
    pts, cols = plane_frame.points(intr, stride=4)
    u, v, d = plane_frame.valid_pixels(4)
    assert np.allclose(pts, unproject_pixels(intr, u, v, d))
    assert len(pts) == 160 * 120 and cols.shape == pts.shape
