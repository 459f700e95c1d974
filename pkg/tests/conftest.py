import numpy as np
import pytest

from poseworks import sample_models
from poseworks.kinematics import RobotModel


@pytest.fixture(scope="session")
def planar_arm() -> RobotModel:
    return sample_models.make_planar_arm()


@pytest.fixture(scope="session")
def pendulum() -> RobotModel:
    return sample_models.make_pendulum()


@pytest.fixture(scope="session")
def serial_arm() -> RobotModel:
    return sample_models.make_serial_arm()


@pytest.fixture(scope="session")
def humanoid() -> RobotModel:
    return sample_models.make_humanoid()


@pytest.fixture(scope="session")
def planar_biped() -> RobotModel:
    return sample_models.make_planar_biped()


def random_configuration(model: RobotModel, rng: np.random.RandomState, scale: float = 0.8):
    lo, hi = model.position_limits()
    q = np.zeros(model.n)
    for i in range(model.n):
        if np.isfinite(lo[i]) and np.isfinite(hi[i]):
            center = 0.5 * (lo[i] + hi[i])
            half = 0.5 * (hi[i] - lo[i])
            q[i] = center + rng.uniform(-scale, scale) * half
        else:
            q[i] = rng.uniform(-1.0, 1.0)
    return q
