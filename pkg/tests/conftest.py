import numpy as np
import pytest
from hypothesis import settings

from vdmap import dataio, scenes
from vdmap.config import RunConfig
from vdmap.geometry import CameraIntrinsics, Se3Pose

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def random_pose(rng, scale=2.0):
    from scipy.spatial.transform import Rotation

    r = Rotation.random(random_state=rng).as_matrix()
    return Se3Pose(r, rng.uniform(-scale, scale, 3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def intr():
    return CameraIntrinsics()


@pytest.fixture
def cfg():
    return RunConfig()


@pytest.fixture(scope="session")
def plane_frame():
    """Noiseless fronto-parallel plane at z = 2 seen from the origin."""
    return dataio.render_synthetic(scenes.fronto_plane(2.0), Se3Pose.identity(),
                                   CameraIntrinsics(), seed=0)


@pytest.fixture(scope="session")
def sweep_frames():
    cfg = RunConfig()
    scene = scenes.desk_scene(1.0)
    return [dataio.render_synthetic(scene, p, cfg.intrinsics(), seed=k, noise=cfg.noise_model(),
                                    timestamp=1.0 + 0.1 * k)
            for k, p in enumerate(scenes.sweep_poses(5, 0.15))]
