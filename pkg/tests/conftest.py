import os

import numpy as np
import pytest

from fieldarm.environment import RobotBody, TriangleMesh
from fieldarm.kinematics import default_dh_table
from fieldarm.magnetostatics import default_magnet_spec

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")

SAMPLE = np.array([0.2, 0.0, 0.3])
STANDOFF = 0.16


@pytest.fixture(scope="session")
def dh():
    return default_dh_table()


@pytest.fixture(scope="session")
def spec():
    return default_magnet_spec()


@pytest.fixture(scope="session")
def body():
    return RobotBody(np.array([0.05, 0.05, 0.04, 0.04, 0.03, 0.03, 0.02]))


@pytest.fixture(scope="session")
def wall():
    vertices = np.array([
        [-0.2, -0.08, -0.1], [0.6, -0.08, -0.1], [0.6, -0.08, 0.7], [-0.2, -0.08, 0.7],
    ])
    return TriangleMesh(vertices, [[0, 1, 2], [0, 2, 3]], "wall")


@pytest.fixture(scope="session")
def walled_config_path():
    return os.path.join(CONFIG_DIR, "walled.yaml")


@pytest.fixture(scope="session")
def default_config_path():
    return os.path.join(CONFIG_DIR, "default.yaml")
