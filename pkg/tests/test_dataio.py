import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vdmap import dataio, scenes
from vdmap.errors import (MalformedHeader, MalformedLine, MissingFile, NoAssociations,
                          UnsupportedProperty)
from vdmap.geometry import CameraIntrinsics, Se3Pose, unproject_pixels
from vdmap.graph import MapGraph

INTR = CameraIntrinsics()
GT_LINE = "1305031102.1758 1.3405 0.6266 1.6575 0.6574 0.6126 -0.2949 -0.3248"


def write_lists(d, rgb_ts, depth_ts, gt_ts):
    (d / "rgb.txt").write_text("# rgb\n" + "".join(f"{t} rgb/{t}.png\n" for t in rgb_ts))
    (d / "depth.txt").write_text("# depth\n" + "".join(f"{t} depth/{t}.png\n" for t in depth_ts))
    (d / "groundtruth.txt").write_text(
        "# gt\n" + "".join(f"{t} 0 0 0 0 0 0 1\n" for t in gt_ts))


# ------------------------------------------------------------------ TUM

def test_groundtruth_line_parses_translation(tmp_path):
    (tmp_path / "gt.txt").write_text("# timestamp tx ty tz qx qy qz qw\n" + GT_LINE + "\n")
    [(ts, pose)] = dataio.read_trajectory(tmp_path / "gt.txt")
    assert ts == pytest.approx(1305031102.1758)
    assert np.allclose(pose.translation, (1.3405, 0.6266, 1.6575))
    q = np.array([0.6574, 0.6126, -0.2949, -0.3248])
    q /= np.linalg.norm(q)
    assert np.allclose(np.abs(pose.quaternion() @ q), 1.0)


def test_depth_scale(tmp_path):
    from PIL import Image

    Image.fromarray(np.full((4, 4), 5000, np.uint16)).save(tmp_path / "d.png")
    assert np.allclose(dataio.read_depth_png(tmp_path / "d.png"), 1.0)


def test_far_timestamp_dropped(tmp_path):
    write_lists(tmp_path, [1.0, 2.0], [1.005, 2.5], [1.0, 2.0])
    man = dataio.read_tum_manifest(tmp_path, 0.02)
    assert [a[0] for a in man.associations] == [0] and man.dropped == 1


def test_no_associations(tmp_path):
    write_lists(tmp_path, [1.0], [5.0], [1.0])
    with pytest.raises(NoAssociations):
        dataio.read_tum_manifest(tmp_path)


def test_missing_directory(tmp_path):
    with pytest.raises(MissingFile):
        dataio.read_tum_manifest(tmp_path / "nope")


def test_malformed_line_number(tmp_path):
    write_lists(tmp_path, [1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    lines = (tmp_path / "depth.txt").read_text().splitlines()
    lines[2] = "2.0"  # file line 3
    (tmp_path / "depth.txt").write_text("\n".join(lines) + "\n")
    with pytest.raises(MalformedLine) as exc:
        dataio.read_tum_manifest(tmp_path)
    assert exc.value.line_number == 3


@given(st.lists(st.floats(0, 100), min_size=1, max_size=15, unique=True),
       st.lists(st.floats(0, 100), min_size=1, max_size=15, unique=True))
def test_association_unique_and_within_tolerance(a, b):
    a, b = sorted(a), sorted(b)
    m = dataio.associate(a, b, 0.5)
    used = [k for k in m if k is not None]
    assert len(used) == len(set(used))
    assert all(abs(a[i] - b[k]) <= 0.5 for i, k in enumerate(m) if k is not None)


def test_write_read_sequence_round_trip(tmp_path):
    scene = scenes.desk_scene(1.0)
    frames = [dataio.render_synthetic(scene, p, INTR, seed=k, timestamp=1.0 + 0.1 * k)
              for k, p in enumerate(scenes.sweep_poses(3))]
    dataio.write_tum_sequence(frames, tmp_path)
    back = dataio.load_tum_sequence(tmp_path)
    assert len(back) == 3
    for f, g in zip(frames, back):
        assert g.timestamp == pytest.approx(f.timestamp)
        assert np.array_equal(g.color, f.color)
        assert np.abs(g.depth - f.depth).max() <= 0.5 / 5000 + 1e-12
        assert g.pose.allclose(f.pose, 1e-8)


# ------------------------------------------------------------------ synthetic scenes

def test_fronto_plane_depth_exact():
    f = dataio.render_synthetic(scenes.fronto_plane(2.0), Se3Pose.identity(), INTR)
    assert np.all(f.depth == 2.0)


def test_sphere_center_depth():
    scene = dataio.SyntheticScene([dataio.Sphere((0, 0, 3), 0.5, (255, 0, 0))])
    intr = CameraIntrinsics(525, 525, 320, 240, 640, 480)
    f = dataio.render_synthetic(scene, Se3Pose.identity(), intr)
    assert f.depth[240, 320] == pytest.approx(2.5, abs=1e-12)
    assert tuple(f.color[240, 320]) == (255, 0, 0)


def test_render_is_deterministic():
    scene = scenes.desk_scene(1.0)
    a = dataio.render_synthetic(scene, scenes.sweep_poses(1)[0], INTR, seed=9)
    b = dataio.render_synthetic(scene, scenes.sweep_poses(1)[0], INTR, seed=9)
    assert np.array_equal(a.depth, b.depth) and np.array_equal(a.color, b.color)


def test_tilted_plane_satisfies_plane_equation():
    scene = dataio.SyntheticScene([dataio.Plane((0.2, -0.1, 3), (0.3, -0.2, -1), (9, 9), (9, 9, 9))])
    pose = Se3Pose(np.eye(3), (0.1, 0.0, -0.2))
    f = dataio.render_synthetic(scene, pose, INTR)
    u, v, d = f.valid_pixels()
    world = pose.apply(unproject_pixels(INTR, u, v, d))
    n = np.array([0.3, -0.2, -1]) / np.linalg.norm([0.3, -0.2, -1])
    assert np.abs((world - (0.2, -0.1, 3)) @ n).max() < 1e-9


def test_box_and_scene_text():
    text = ("# demo\nPLANE 0 0 4 0 0 -1 2 2 10 20 30\nSPHERE 0 0 3 0.2 1 2 3\n"
            "BOX 0.5 0 2 0.1 0.1 0.1 4 5 6\nNOISE 0.5\n")
    scene = dataio.parse_scene(text)
    assert [type(p).__name__ for p in scene.primitives] == ["Plane", "Sphere", "Box"]
    assert scene.noise_multiplier == 0.5
    f = dataio.render_synthetic(dataio.SyntheticScene(scene.primitives), Se3Pose.identity(),
                                CameraIntrinsics(525, 525, 320, 240, 640, 480))
    u_box = int(round(0.5 / 2 * 525 + 320))
    assert f.depth[240, u_box] == pytest.approx(1.9, abs=1e-12)
    with pytest.raises(MalformedLine) as exc:
        dataio.parse_scene("SPHERE 0 0 3 0.2 1 2 3\nBOX 1 2\n", "s.txt")
    assert exc.value.line_number == 2


# ------------------------------------------------------------------ PLY

def test_single_white_point_ascii(tmp_path):
    dataio.write_ply(tmp_path / "p.ply", [[0, 0, 0]], fmt="ascii")
    lines = (tmp_path / "p.ply").read_text().splitlines()
    assert lines[-1] == "0 0 0 255 255 255"
    assert "element vertex 1" in lines


@pytest.mark.parametrize("fmt", ["ascii", "binary"])
def test_empty_ply(tmp_path, fmt):
    dataio.write_ply(tmp_path / "e.ply", np.zeros((0, 3)), fmt=fmt)
    assert b"element vertex 0" in (tmp_path / "e.ply").read_bytes()
    pts, cols = dataio.load_ply_points(tmp_path / "e.ply")
    assert pts.shape == (0, 3)


def test_binary_round_trip_bit_identical(tmp_path, rng):
    pts = rng.normal(size=(1000, 3)).astype(np.float32)
    cols = rng.integers(0, 256, (1000, 3))
    dataio.write_ply(tmp_path / "b.ply", pts, cols, fmt="binary")
    p, c = dataio.load_ply_points(tmp_path / "b.ply")
    assert np.array_equal(p.astype(np.float32), pts) and np.array_equal(c, cols)


def test_ascii_round_trip(tmp_path, rng):
    pts = rng.normal(size=(1000, 3))
    dataio.write_ply(tmp_path / "a.ply", pts, fmt="ascii")
    p, c = dataio.load_ply_points(tmp_path / "a.ply")
    assert np.allclose(p, pts, atol=1e-6) and (c == 255).all()


def test_covariance_fields(tmp_path, rng):
    a = rng.normal(size=(5, 3, 3))
    cov = a @ np.swapaxes(a, 1, 2)
    dataio.write_ply(tmp_path / "c.ply", rng.normal(size=(5, 3)), covariances=cov)
    _, _, table = dataio.read_ply(tmp_path / "c.ply")
    assert np.allclose(table["cxy"], cov[:, 0, 1], rtol=1e-6)
    assert np.allclose(table["czz"], cov[:, 2, 2], rtol=1e-6)


def test_missing_colors_default_grey(tmp_path):
    (tmp_path / "g.ply").write_text("ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\n"
                                    "property float y\nproperty float z\nend_header\n"
                                    "1 2 3\n4 5 6\n")
    p, c = dataio.load_ply_points(tmp_path / "g.ply")
    assert np.allclose(p, [[1, 2, 3], [4, 5, 6]]) and (c == 128).all()


def test_bad_ply_headers(tmp_path):
    (tmp_path / "empty.ply").write_bytes(b"")
    with pytest.raises(MalformedHeader):
        dataio.read_ply(tmp_path / "empty.ply")
    (tmp_path / "be.ply").write_text("ply\nformat binary_big_endian 1.0\nelement vertex 0\n"
                                     "property float x\nproperty float y\nproperty float z\n"
                                     "end_header\n")
    with pytest.raises(UnsupportedProperty):
        dataio.read_ply(tmp_path / "be.ply")


# ------------------------------------------------------------------ graph persistence

def test_graph_save_load_round_trip(tmp_path, sweep_frames):
    g = MapGraph(INTR)
    for f in sweep_frames[:3]:
        g.add_keyframe(f)
    dataio.save_graph(g, tmp_path / "g")
    h = dataio.load_graph(tmp_path / "g")
    assert len(h) == 3 and h.edges == g.edges and h.current == g.current
    for a, b in zip(g.keyframes, h.keyframes):
        assert a.pose.allclose(b.pose, 1e-12)
        assert np.array_equal(a.cells.count, b.cells.count)
        assert np.array_equal(a.cells.scatter, b.cells.scatter)
