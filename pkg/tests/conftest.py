import numpy as np
import pytest

from rolo.geometry import RigidTransform, from_euler, so3_exp
from rolo.synth import LidarModel, generate_world, simulate_scan


def random_rotation(rng, max_angle=np.pi):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return so3_exp(axis * rng.uniform(0, max_angle))


def random_transform(rng, max_angle=np.pi, scale=5.0):
    return RigidTransform(random_rotation(rng, max_angle), rng.uniform(-scale, scale, 3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def box_world():
    return generate_world(0, preset="box")


@pytest.fixture(scope="session")
def box_scan(box_world):
    """Noiseless scan from the room centre."""
    return simulate_scan(box_world, RigidTransform.identity(), LidarModel(range_noise_sigma=0.0), seed=1)


@pytest.fixture(scope="session")
def tilted_pose():
    return RigidTransform(from_euler(0.02, -0.03, 0.05), np.array([0.2, -0.1, 0.05]))
