import numpy as np
import pytest

from vdmap import dataio, scenes
from vdmap.errors import MalformedLine, NoValidDepth, UnknownKeyframe
from vdmap.geometry import CameraIntrinsics, Se3Pose
from vdmap.graph import (ActionKind, MapGraph, covisibility, format_graph, neighbor_groups,
                         parse_graph, sample_grid)
from vdmap.keyframe import Keyframe, RgbdFrame

INTR = CameraIntrinsics()
WALL = scenes.fronto_plane(2.0)
FOV_W = INTR.width / INTR.fx * 2.0  # view width on the z = 2 plane


def at(x, z=0.0, scene=WALL, ts=0.0):
    pose = Se3Pose(np.eye(3), (x, 0.0, z))
    return dataio.render_synthetic(scene, pose, INTR, timestamp=ts)


def kf_from(frame, kf_id=0):
    kf = Keyframe(kf_id, frame.pose, INTR)
    kf.integrate_frame(frame)
    return kf


def test_sample_grid_is_32_by_24():
    u, v = sample_grid(640, 480)
    assert len(u) == 768 and len(np.unique(u)) == 32 and len(np.unique(v)) == 24


def test_covisibility_same_pose_is_one():
    f = at(0.0)
    assert covisibility(f, kf_from(f)) == 1.0


def test_covisibility_looking_away_is_zero():
    f = at(0.0)
    back = Se3Pose(np.diag([-1.0, 1.0, -1.0]), (0, 0, 0))
    room = dataio.SyntheticScene([dataio.Plane((0, 0, 2), (0, 0, -1), (10, 10), (1, 1, 1)),
                                  dataio.Plane((0, 0, -2), (0, 0, 1), (10, 10), (1, 1, 1))])
    g = dataio.render_synthetic(room, back, INTR)
    assert covisibility(g, kf_from(f)) == 0.0


def test_covisibility_half_fov_shift():
    f0 = at(0.0)
    f1 = at(FOV_W / 2)
    assert covisibility(f1, kf_from(f0)) == pytest.approx(0.5, abs=0.1)


def test_covisibility_symmetric_on_static_scene():
    scene = scenes.desk_scene()
    poses = scenes.sweep_poses(5, 0.3)
    fa = dataio.render_synthetic(scene, poses[0], INTR)
    fb = dataio.render_synthetic(scene, poses[4], INTR)
    assert abs(covisibility(fa, kf_from(fb)) - covisibility(fb, kf_from(fa))) <= 0.05


def test_covisibility_needs_valid_depth():
    empty = RgbdFrame(0.0, np.zeros((480, 640, 3), np.uint8), np.zeros((480, 640)),
                      Se3Pose.identity())
    with pytest.raises(NoValidDepth):
        covisibility(empty, kf_from(at(0.0)))


def test_bootstrap_and_stationary_camera():
    g = MapGraph(INTR)
    first = g.process_frame(at(0.0))
    assert (first.kind, first.keyframe_id) == (ActionKind.CREATED_KEYFRAME, 0)
    for k in range(9):
        a = g.process_frame(at(0.0, ts=k + 1.0))
        assert a.kind == ActionKind.UPDATED_CURRENT
    assert len(g) == 1 and g.keyframes[0].frames_integrated == 10


def test_loop_closure_returns_to_first_keyframe():
    g = MapGraph(INTR)
    g.process_frame(at(0.0))
    a = g.process_frame(at(1.5))  # delta vs kf0 about 0.38
    assert a.kind == ActionKind.CREATED_KEYFRAME and a.keyframe_id == 1
    back = at(0.3)  # delta vs kf1 about 0.51, vs kf0 about 0.88
    assert g.covisibility(back, g.keyframe(1)) < g.delta_update
    assert g.covisibility(back, g.keyframe(0)) >= g.delta_loop
    a = g.process_frame(back)
    assert (a.kind, a.keyframe_id) == (ActionKind.LOOP_CLOSURE_UPDATE, 0)
    assert g.current == 0


def test_edges_symmetric_and_bounded():
    g = MapGraph(INTR)
    for x in (0.0, 0.5, 1.0, 1.6, 2.2, 1.0, 0.1):
        g.process_frame(at(x))
    for (i, j), d in g.edges.items():
        assert i < j and 0.0 <= d <= 1.0
        assert g.edge(i, j) == g.edge(j, i) == d


def test_routing_replays_identically():
    path = [at(x, ts=k) for k, x in enumerate((0.0, 0.4, 0.9, 1.5, 0.8, 0.2))]

    def run():
        g = MapGraph(INTR)
        return [(a.kind, a.keyframe_id) for a in map(g.process_frame, path)]

    assert run() == run()


def test_neighbor_groups_examples():
    g = MapGraph(INTR)
    g.add_keyframe(at(0.0))
    assert neighbor_groups(g, 0, 1.0, 0.5) == [0]
    far = g.new_keyframe(Se3Pose(np.eye(3), (10.0, 0, 0)))
    assert neighbor_groups(g, 0, 1.0, 0.5) == [0]
    assert far.id == 1


def test_neighbor_groups_corridor_chain():
    g = MapGraph(INTR)
    for x in (0.0, 0.5, 1.0):
        g.new_keyframe(Se3Pose(np.eye(3), (x, 0, 0)))
    g.set_edge(0, 1, 0.7)
    g.set_edge(1, 2, 0.7)
    assert neighbor_groups(g, 1, -1, -1) == [0, 1, 2]
    assert neighbor_groups(g, 0, -1, -1) == [0, 1]
    # pose criterion admits the unlinked keyframe 1 m away
    assert neighbor_groups(g, 0, 1.0, 0.1) == [0, 1, 2]


def test_unknown_keyframe():
    with pytest.raises(UnknownKeyframe):
        MapGraph(INTR).keyframe(3)


def test_graph_text_round_trip():
    g = MapGraph(INTR)
    for x in (0.0, 1.5):
        g.process_frame(at(x, ts=x))
    kfs, edges = parse_graph(format_graph(g))
    assert [k for k, _, _ in kfs] == [0, 1]
    for (kid, pose, ts), kf in zip(kfs, g.keyframes):
        assert pose.allclose(kf.pose, 1e-12) and ts == kf.source_timestamp
    assert edges == g.edges


def test_graph_text_malformed_line_number():
    text = "KF 0 0 0 0 0 0 0 1 0.0\nEDGE 0 1 1.5\n"
    with pytest.raises(MalformedLine) as exc:
        parse_graph(text, "g.txt")
    assert exc.value.line_number == 2
