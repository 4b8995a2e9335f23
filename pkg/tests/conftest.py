import math

import numpy as np
import pytest

from gammamap.geometry import Pose, Trajectory, yaw_quat
from gammamap.physics import DetectorModel, Interaction, ListModeEvent
from gammamap.simulator import Discrete, Scenario, SourceTruth


def make_event(hits, event_id=0, t=0.0):
    """hits: sequence of ((x, y, z) mm, energy keV)."""
    return ListModeEvent(event_id, t, tuple(Interaction(p, e) for p, e in hits))


def small_scenario(seed=11, dwell=30.0, activity=61.28, isotope="Na-22", position=(2.0, 1.8, 0.7), **det_kw):
    poses = [Pose(float(k), (1.0 + 0.5 * k, 1.0, 0.5), yaw_quat(0.0)) for k in range(3)]
    return Scenario(
        name="small",
        room_min=(0.0, 0.0, 0.0),
        room_max=(4.0, 3.0, 2.0),
        trajectory=Trajectory(poses),
        motion=Discrete(tuple((k, dwell) for k in range(3))),
        sources=[SourceTruth("s1", isotope, position, activity)],
        detector=DetectorModel(**det_kw),
        seed=seed,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def yaw90():
    return Pose(0.0, (0.0, 0.0, 0.0), yaw_quat(math.pi / 2))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
