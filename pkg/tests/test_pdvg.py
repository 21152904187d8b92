import math
from dataclasses import replace

import numpy as np
import pytest

from src.errors import InfeasibleSmoothingError
from src.main import cli_dispatch
from src.models.detection import DetectionSeries
from src.models.ins import ImuSpec
from src.models.radar import detection_radius
from src.planner import pdvg
from src.planner.geometry import initial_polygons
from src.planner.pdvg import (
    check_validity, evaluate_candidate, evaluate_path, expand_polygons, plan,
)
from tests.conftest import scenario_path


def _series(pd, sigma, positions=None, rcs=0.15):
    pd = np.atleast_2d(pd)
    n = pd.shape[1]
    if positions is None:
        positions = np.zeros((n, 3))
    return DetectionSeries(
        t=np.arange(n, dtype=float),
        positions=np.asarray(positions, dtype=float),
        radar_names=[f'r{i}' for i in range(pd.shape[0])],
        pd=pd,
        sigma_pd=np.atleast_2d(sigma),
        rcs=np.full(pd.shape, rcs),
        sigma_radar=np.zeros(pd.shape),
    )


def test_check_validity():
    series = _series([[0.05, 0.2, 0.05], [0.0, 0.0, 0.0]],
                     [[0.01, 0.0, 0.02], [0.0, 0.0, 0.0]])
    violations = check_validity(series, 0.1, 3.0)
    assert [(v.radar_index, v.sample_index) for v in violations] == [(0, 1), (0, 2)]
    assert violations[0].margin == pytest.approx(0.1)
    assert violations[1].t == 2.0
    assert check_validity(series, 0.5, 3.0) == []


def test_threshold_itself_is_a_violation():
    series = _series([[0.07]], [[0.01]])
    assert len(check_validity(series, 0.1, 3.0)) == 1


def test_expand_polygons_grows_the_violated_vertex_and_its_flankers(clear_field):
    cfg = clear_field.planner
    radar = clear_field.radars[0]
    polygons = initial_polygons(clear_field.radars, cfg.pd_init, cfg.sigma_r_init,
                                cfg.n_vertices)
    old = polygons[0].radii.copy()

    # a sample due north of the radar, just outside the polygon
    position = np.append(radar.ne + np.array([old[0] + 10e3, 0.0]), -3500.0)
    series = _series([[0.2]], [[0.01]], positions=[position])
    violations = check_validity(series, cfg.p_dt, cfg.m_sigma)
    grown = expand_polygons(polygons, violations, series, clear_field)[0]

    target = detection_radius(max(cfg.p_dt - cfg.m_sigma * 0.01, cfg.pd_floor), 0.15,
                              radar.c_r, radar.p_fa)
    assert len(grown) == len(old)
    assert grown.radii[0] == pytest.approx(max(target, old[0] + cfg.growth_floor_m))
    assert grown.radii[1] == pytest.approx(max(target, old[1]))
    assert grown.radii[-1] == pytest.approx(max(target, old[-1]))
    np.testing.assert_array_equal(grown.radii[2:-1], old[2:-1])
    assert np.all(grown.radii >= old)


def test_expand_polygons_leaves_clean_radars_alone(clear_field):
    cfg = clear_field.planner
    polygons = initial_polygons(clear_field.radars, cfg.pd_init, cfg.sigma_r_init,
                                cfg.n_vertices)
    series = _series([[0.0]], [[0.0]])
    assert expand_polygons(polygons, [], series, clear_field)[0] is polygons[0]


def test_expand_polygons_inserts_missing_flankers(clear_field):
    cfg = clear_field.planner
    radar = clear_field.radars[0]
    coarse = initial_polygons(clear_field.radars, cfg.pd_init, cfg.sigma_r_init, 5)
    position = np.append(radar.ne + np.array([coarse[0].radii[0] + 10e3, 0.0]), -3500.0)
    series = _series([[0.2]], [[0.01]], positions=[position])
    violations = check_validity(series, cfg.p_dt, cfg.m_sigma)
    grown = expand_polygons(coarse, violations, series, clear_field)[0]
    step = 2.0 * math.pi / cfg.n_vertices
    assert len(grown) == 7
    assert grown.vertex_near(step) is not None
    assert grown.vertex_near(2.0 * math.pi - step) is not None


def test_clear_field_is_solved_in_one_iteration(clear_field):
    result = plan(clear_field)
    assert result.feasible
    assert result.iterations == 1
    assert len(result.waypoints) == 2
    np.testing.assert_allclose(result.waypoints, [clear_field.start, clear_field.goal])
    assert len(result.candidates) == 1 and result.candidates[0].n_violations == 0
    assert result.min_clearance(clear_field.radars) > 2000e3
    assert list(result.waypoints_frame().columns) == ['p_n [m]', 'p_e [m]']
    assert len(result.polygons_frame()) == clear_field.planner.n_vertices
    assert result.iteration_log()['feasible'] is True


def test_evaluate_path_records_the_gain_checksum(clear_field):
    trajectory, series = evaluate_path(np.array([clear_field.start, clear_field.goal]),
                                       clear_field)
    assert len(series.t) == len(trajectory)
    assert len(series.metadata['gain_checksum']) == 64


@pytest.mark.slow
def test_imu_grade_changes_the_route_topology(gauntlet):
    industrial = gauntlet.with_dt(5.0)
    tactical = industrial.with_imu(ImuSpec.from_grade('tactical'))
    results = {}
    for label, scenario in (('industrial', industrial), ('tactical', tactical)):
        result = plan(scenario)
        assert result.feasible, result.diagnostics
        assert result.iterations <= 25
        _, series = evaluate_path(result.waypoints, scenario)
        cfg = scenario.planner
        assert check_validity(series, cfg.p_dt, cfg.m_sigma) == []
        results[label] = result.min_clearance(scenario.radars)
    assert results['industrial'] > results['tactical']


def test_evaluate_candidate_returns_the_detection_series(clear_field):
    waypoints = np.array([clear_field.start, clear_field.goal])
    series = evaluate_candidate(waypoints, clear_field)
    assert series.radar_names == ['far']
    assert np.all(series.sigma_pd >= 0.0)
    assert check_validity(series, clear_field.planner.p_dt, clear_field.planner.m_sigma) == []


def test_smoothing_failure_inflates_the_polygons_once(clear_field, monkeypatch):
    calls = []

    def evaluate_once_failing(waypoints, scenario):
        calls.append(waypoints)
        if len(calls) == 1:
            raise InfeasibleSmoothingError("fillet does not fit", 1)
        return evaluate_path(waypoints, scenario)

    monkeypatch.setattr(pdvg, 'evaluate_path', evaluate_once_failing)
    cfg = clear_field.planner
    initial = initial_polygons(clear_field.radars, cfg.pd_init, cfg.sigma_r_init,
                               cfg.n_vertices)
    result = plan(clear_field)
    assert result.feasible
    assert len(calls) == 2 and result.iterations == 1
    np.testing.assert_allclose(result.polygons[0].radii,
                               initial[0].radii * (1.0 + cfg.smoothing_inflation), rtol=1e-15)


def test_repeated_smoothing_failure_is_infeasible(clear_field, monkeypatch, tmp_path):
    def always_failing(waypoints, scenario):
        raise InfeasibleSmoothingError("fillet does not fit", 1)

    monkeypatch.setattr(pdvg, 'evaluate_path', always_failing)
    with pytest.raises(InfeasibleSmoothingError):
        plan(clear_field)
    status = cli_dispatch(['plan', scenario_path('clear_field.yaml'), '--out', str(tmp_path),
                           '-q'])
    assert status == 3


def _unreachable_threshold(scenario):
    return replace(scenario, planner=replace(scenario.planner, p_dt=1e-9))


def test_iteration_cap(clear_field):
    # the far radar still gives P_D above a 1e-9 threshold
    scenario = _unreachable_threshold(clear_field)
    result = plan(scenario, max_iterations=1)
    assert not result.feasible
    assert result.iterations == 1
    assert result.diagnostics['reason'] == 'max_iterations'
    violations = result.diagnostics['violations']
    assert 0 < len(violations) <= len(result.detection.t)
    assert all(v['radar'] == 'far' and v['margin'] > 0.0 for v in violations)
    assert len(result.candidates) == 1
    assert result.candidates[0].n_violations == len(violations)
    assert result.iteration_log()['feasible'] is False


def test_wall_across_the_bounds_makes_the_plan_infeasible(clear_field):
    # a radar midway between start and goal whose polygon spans the bounds east-west
    cfg = clear_field.planner
    far = clear_field.radars[0]
    wall = replace(far, p_r_n=np.array([150e3, 0.0, 0.0]), name='wall')
    radius = detection_radius(cfg.pd_init, cfg.sigma_r_init, far.c_r, far.p_fa)
    sigma_r = cfg.sigma_r_init * (125e3 / radius) ** 4
    scenario = replace(clear_field, radars=[wall],
                       planner=replace(cfg, sigma_r_init=sigma_r))
    polygon = initial_polygons(scenario.radars, cfg.pd_init, sigma_r, cfg.n_vertices)[0]
    np.testing.assert_allclose(polygon.radii, 125e3, rtol=1e-6)

    result = plan(scenario)
    assert not result.feasible
    assert result.iterations == 1
    assert result.diagnostics['reason'] == 'no_path'
    assert result.candidates == []
