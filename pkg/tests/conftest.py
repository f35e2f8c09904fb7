import numpy as np
import pytest

from flowvariants.geometry import CameraIntrinsics
from flowvariants.simulator import box, constant_velocity_trajectory, plane

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def small_intrinsics():
    return CameraIntrinsics(fx=200.0, fy=200.0, cx=80.0, cy=60.0, width=160, height=120)


@pytest.fixture
def kitti_intrinsics():
    return CameraIntrinsics(fx=721.5, fy=721.5, cx=609.6, cy=172.9, width=1242, height=375)


@pytest.fixture
def box_scene():
    return [box([1.0, 0.5, 10.0], [2.0, 1.0, 1.0]), plane([0.0, 1.5, 0.0], [0.0, -1.0, 0.0])]


@pytest.fixture
def general_trajectory():
    return constant_velocity_trajectory(5, 0.1, velocity=[0.3, 0.0, 2.0], omega=[0.02, 0.1, -0.05])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def acceptance_report():
    def record(line: str):
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
