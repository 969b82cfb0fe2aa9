import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_pose
from vdmap.errors import InvalidPose, NonPositiveDepth, OutOfContainer
from vdmap.geometry import (CameraIntrinsics, ContainerLayout, Se3Pose, cell_index, cell_indices,
                            look_at, project, project_points, relative_transform, transform_point,
                            unproject, unproject_pixels)

SPEC_INTR = CameraIntrinsics(500.0, 500.0, 320.0, 240.0, 640, 480)
coord = st.floats(-5, 5, allow_nan=False)
depth = st.floats(0.1, 10, allow_nan=False)


def test_relative_transform_of_self_is_identity(rng):
    k = random_pose(rng)
    assert relative_transform(k, k).allclose(Se3Pose.identity())


def test_relative_transform_from_identity_base(rng):
    p = random_pose(rng)
    assert relative_transform(Se3Pose.identity(), p).allclose(p)


def test_relative_transform_composes_back(rng):
    for _ in range(50):
        k0, ki = random_pose(rng), random_pose(rng)
        t = relative_transform(k0, ki)
        assert np.allclose((k0 @ t).matrix(), ki.matrix(), atol=1e-9)


def test_transform_point_examples():
    assert np.allclose(transform_point(Se3Pose.identity(), (1, 2, 3)), (1, 2, 3))
    t = Se3Pose(np.eye(3), (0.5, 0, 0))
    assert np.allclose(transform_point(t, (0, 0, 1)), (0.5, 0, 1))


def test_transform_point_matches_homogeneous_matrix(rng):
    for _ in range(100):
        t = random_pose(rng)
        p = rng.uniform(-3, 3, 3)
        oracle = (t.matrix() @ np.r_[p, 1.0])[:3]
        assert np.allclose(transform_point(t, p), oracle, atol=1e-12, rtol=0)


def test_two_step_transform_via_world(rng):
    for _ in range(50):
        k0, ki = random_pose(rng), random_pose(rng)
        p = rng.uniform(-2, 2, 3)
        via_world = k0.inverse().apply(ki.apply(p))
        assert np.allclose(transform_point(relative_transform(k0, ki), p), via_world, atol=1e-9)


def test_quaternion_round_trip(rng):
    for _ in range(20):
        p = random_pose(rng)
        q = p.quaternion()
        assert q[3] >= 0
        assert Se3Pose.from_quaternion(p.translation, q).allclose(p)


def test_invalid_rotation_rejected():
    with pytest.raises(InvalidPose):
        Se3Pose(np.diag([1.0, 1.0, 2.0]), np.zeros(3))


def test_project_examples():
    assert project(SPEC_INTR, (0, 0, 1)) == pytest.approx((320, 240, 1))
    assert project(SPEC_INTR, (0.1, -0.2, 2)) == pytest.approx((345, 190, 2), abs=1e-12)
    with pytest.raises(NonPositiveDepth):
        project(SPEC_INTR, (0, 0, -1))


def test_unproject_examples():
    assert np.allclose(unproject(SPEC_INTR, 320, 240, 1), (0, 0, 1))
    assert np.allclose(unproject(SPEC_INTR, 345, 190, 2), (0.1, -0.2, 2), atol=1e-12)


@given(coord, coord, depth)
def test_projection_round_trip_property(x, y, z):
    u, v, d = project(SPEC_INTR, (x, y, z))
    assert np.allclose(unproject(SPEC_INTR, u, v, d), (x, y, z), atol=1e-9, rtol=0)


def test_vectorized_projection_matches_scalar(rng, intr):
    p = np.c_[rng.uniform(-2, 2, (200, 2)), rng.uniform(0.1, 8, 200)]
    u, v, z, ok = project_points(intr, p)
    assert ok.all()
    for k in range(0, 200, 17):
        assert (u[k], v[k], z[k]) == pytest.approx(project(intr, p[k]))
    assert np.allclose(unproject_pixels(intr, u, v, z), p, atol=1e-9)


def test_cell_index_examples():
    layout = ContainerLayout()
    assert cell_index(layout, 0, 0) == (64, 48)
    assert cell_index(layout, -320, -240) == (0, 0)
    with pytest.raises(OutOfContainer):
        cell_index(layout, 2000, 0)


def test_for_source_offsets():
    layout = ContainerLayout.for_source(640, 480)
    assert (layout.offset_u, layout.offset_v) == (320, 240)
    assert layout.shape == (256, 192)


def test_cell_index_total_over_container():
    layout = ContainerLayout()
    u = np.arange(-320, 960) + 0.5
    v = np.arange(-240, 720) + 0.5
    uu, vv = np.meshgrid(u, v)
    i, j, inside = cell_indices(layout, uu.ravel(), vv.ravel())
    assert inside.all()
    counts = np.bincount(layout.flat(i, j), minlength=layout.n_cells)
    assert (counts == 25).all()


@given(st.integers(0, 255), st.integers(0, 191), st.floats(0, 4.999), st.floats(0, 4.999))
def test_pixels_in_band_share_cell(ci, cj, du, dv):
    layout = ContainerLayout()
    u = ci * 5 - 320 + du
    v = cj * 5 - 240 + dv
    assert cell_index(layout, u, v) == (ci, cj)


def test_look_at_points_optical_axis():
    pose = look_at((1, 0, 0), (1, 0, 5))
    assert np.allclose(pose.optical_axis, (0, 0, 1))
    u, v, _ = project(CameraIntrinsics(), pose.inverse().apply(np.array([1.0, 0, 5])))
    assert (u, v) == pytest.approx((319.5, 239.5))
