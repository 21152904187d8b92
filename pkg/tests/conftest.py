import os

import numpy as np
import pytest

from src.models.ins import ImuSpec, MeasSpec, NavCovariance, Rect
from src.models.radar import EllipsoidRcs, RadarSite
from src.models.trajectory import trajectory_from_waypoints
from src.parsers.scenario_parser import load_scenario
from src.utils.progress import set_progress

SCENARIO_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), 'scenarios')


def scenario_path(name):
    return os.path.join(SCENARIO_DIR, name)


@pytest.fixture(autouse=True)
def quiet_progress():
    set_progress(False)
    yield
    set_progress(True)


def central_difference(f, x, h):
    """Jacobian of f at x by central differences, one step size per component."""
    x = np.asarray(x, dtype=float)
    h = np.broadcast_to(h, x.shape)
    columns = []
    for j in range(len(x)):
        step = np.zeros_like(x)
        step[j] = h[j]
        columns.append((np.asarray(f(x + step)) - np.asarray(f(x - step))) / (2.0 * h[j]))
    return np.stack(columns, axis=-1)


def rel_frobenius(A, B):
    return np.linalg.norm(A - B) / np.linalg.norm(B)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def rcs():
    return EllipsoidRcs(0.18, 0.17, 0.20)


@pytest.fixture
def radar():
    C_rr = np.diag([(500.0 / 3.0) ** 2] * 3 + [(2.0 / 3.0) ** 2])
    return RadarSite(np.zeros(3), 164.7, 1e-9, C_rr, 'radar-1')


@pytest.fixture
def tactical():
    return ImuSpec.from_grade('tactical')


@pytest.fixture
def industrial():
    return ImuSpec.from_grade('industrial')


@pytest.fixture
def meas():
    return MeasSpec(1.0 / 3.0, 1.0 / 3.0, 1.0, 0.1 / 3.0, np.radians(0.1 / 3.0))


@pytest.fixture
def denied_meas():
    """Measurement spec whose GPS outage covers the whole plane used in the tests."""
    outage = Rect(-1e7, 1e7, -1e7, 1e7)
    return MeasSpec(1.0 / 3.0, 1.0 / 3.0, 1.0, 0.1 / 3.0, np.radians(0.1 / 3.0),
                    gps_denied_regions=(outage,))


@pytest.fixture
def turning_trajectory():
    """About 60 s at 200 m/s with one 30 degree clothoid-arc-clothoid turn."""
    corner = np.array([6000.0, 0.0])
    leg = 6000.0 * np.array([np.cos(np.radians(30.0)), np.sin(np.radians(30.0))])
    points = np.array([[0.0, 0.0], corner, corner + leg])
    return trajectory_from_waypoints(points, altitude=3500.0, speed=200.0, dt=0.1)


@pytest.fixture
def P0(tactical):
    return NavCovariance.initial(tactical)


@pytest.fixture
def validation_scenario():
    return load_scenario(scenario_path('validation.yaml'))


@pytest.fixture
def clear_field():
    return load_scenario(scenario_path('clear_field.yaml'))


@pytest.fixture
def gauntlet():
    return load_scenario(scenario_path('gauntlet.yaml'))


@pytest.fixture
def short_validation_path():
    """20 km northbound leg crossing into the validation scenario's GPS outage."""
    return np.array([[-110e3, 550e3], [-90e3, 550e3]])
