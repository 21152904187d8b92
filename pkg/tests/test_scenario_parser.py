import math
import os
import textwrap

import numpy as np
import pytest
import yaml

from src.errors import ConfigError
from src.models.ins import ImuSpec
from src.parsers.scenario_parser import (
    dump_scenario, load_scenario, parse_scenario, scenario_document,
)
from tests.conftest import SCENARIO_DIR, scenario_path

MINIMAL = textwrap.dedent("""\
    name: minimal
    units: {length: km, angle: deg, time: s}
    radars:
      - {id: r1, position: [10.0, 20.0, 0.0], sigma_position_m: 100.0, sigma_c_r: 0.5}
    start: [0.0, 0.0]
    goal: [100.0, 0.0]
    altitude: 3.5
    bounds: {n_min: -50.0, n_max: 150.0, e_min: -50.0, e_max: 50.0}
    gps_denied:
      - {n_min: 40.0, n_max: 60.0, e_min: -50.0, e_max: 50.0}
    imu: {grade: tactical}
    measurements: {sigma_psi: 0.05}
    trajectory: {speed_mps: 150.0, dt: 2.0, pitch_trim: 1.0}
""")


def _document(**changes):
    document = yaml.safe_load(MINIMAL)
    document.update(changes)
    return yaml.safe_dump(document)


def test_units_are_converted_to_si():
    scenario = parse_scenario(MINIMAL)
    np.testing.assert_allclose(scenario.radars[0].p_r_n, [10e3, 20e3, 0.0])
    np.testing.assert_allclose(scenario.goal, [100e3, 0.0])
    assert scenario.altitude == pytest.approx(3500.0)
    assert scenario.bounds.n_max == pytest.approx(150e3)
    assert scenario.meas.gps_denied_regions[0].n_min == pytest.approx(40e3)
    assert scenario.meas.sigma_psi == pytest.approx(math.radians(0.05))
    assert scenario.trajectory.pitch_trim == pytest.approx(math.radians(1.0))
    assert scenario.trajectory.dt == 2.0
    np.testing.assert_allclose(np.diag(scenario.radars[0].C_rr), [1e4, 1e4, 1e4, 0.25])


def test_defaults_fill_the_common_parameters():
    scenario = parse_scenario(MINIMAL)
    radar = scenario.radars[0]
    assert radar.c_r == 164.7 and radar.p_fa == 1e-9
    assert scenario.planner.p_dt == 0.1 and scenario.planner.m_sigma == 3.0
    assert scenario.planner.n_vertices == 30
    assert (scenario.rcs.a, scenario.rcs.b, scenario.rcs.c) == (0.18, 0.17, 0.20)
    assert scenario.P0.sigmas()[0] == pytest.approx(10.0)


def test_metre_and_hour_units():
    text = _document(units={'length': 'm', 'angle': 'rad', 'time': 'hr'},
                     start=[0.0, 0.0], goal=[1000.0, 0.0], altitude=3500.0,
                     bounds={'n_min': -10.0, 'n_max': 2000.0, 'e_min': -10.0, 'e_max': 10.0},
                     gps_denied=[], measurements={},
                     trajectory={'dt': 0.001},
                     imu={'grade': 'tactical', 'tau_a': 2.0, 'tau_g': 0.5})
    scenario = parse_scenario(text)
    assert scenario.trajectory.dt == pytest.approx(3.6)
    assert scenario.imu.tau_a == pytest.approx(7200.0)
    assert scenario.imu.tau_g == pytest.approx(1800.0)
    np.testing.assert_allclose(scenario.goal, [1000.0, 0.0])


def test_altitude_from_start():
    text = _document(start=[0.0, 0.0, -2.0], altitude=None)
    assert parse_scenario(text).altitude == pytest.approx(2000.0)


def test_missing_altitude():
    with pytest.raises(ConfigError, match="altitude"):
        parse_scenario(_document(altitude=None))


def test_duplicate_radar_ids():
    radar = {'id': 'r1', 'position': [0.0, 0.0, 0.0]}
    with pytest.raises(ConfigError, match="duplicate") as info:
        parse_scenario(_document(radars=[radar, radar]))
    assert info.value.field_path == '<document>'


def test_field_errors_carry_their_path():
    radar = {'id': 'r1', 'position': [0.0, 0.0, 0.0], 'c_r': -1.0}
    with pytest.raises(ConfigError) as info:
        parse_scenario(_document(radars=[radar]))
    assert info.value.field_path == 'radars.0.c_r'


def test_unknown_key():
    with pytest.raises(ConfigError) as info:
        parse_scenario(_document(wind={'speed': 5.0}))
    assert info.value.field_path == 'wind'


def test_malformed_yaml():
    with pytest.raises(ConfigError, match="malformed YAML"):
        parse_scenario("radars: [\n")
    with pytest.raises(ConfigError):
        parse_scenario("- just\n- a list\n")


def _rates(**rates_hz):
    return {'sigma_psi': 0.05, 'rates_hz': rates_hz}


def test_measurement_rates_are_typed():
    assert parse_scenario(_document(measurements=_rates(position=2.0))) is not None
    with pytest.raises(ConfigError) as info:
        parse_scenario(_document(measurements=_rates(position='fast')))
    assert info.value.field_path == 'measurements.rates_hz.position'
    with pytest.raises(ConfigError) as info:
        parse_scenario(_document(measurements=_rates(position=0.0)))
    assert info.value.field_path == 'measurements.rates_hz.position'
    with pytest.raises(ConfigError) as info:
        parse_scenario(_document(measurements=_rates(gps=1.0)))
    assert info.value.field_path.startswith('measurements.rates_hz.gps')


def test_reference_path_rows_are_pairs():
    with pytest.raises(ConfigError) as info:
        parse_scenario(_document(reference_path=[[0.0, 0.0], [1.0]]))
    assert info.value.field_path == 'reference_path.1'
    with pytest.raises(ConfigError) as info:
        parse_scenario(_document(reference_path=[[0.0, 0.0]]))
    assert info.value.field_path == 'reference_path'


def test_ragged_radar_covariance():
    radar = {'id': 'r1', 'position': [0.0, 0.0, 0.0],
             'covariance': [[1.0, 0, 0, 0], [0, 1.0, 0], [0, 0, 1.0, 0], [0, 0, 0, 1.0]]}
    with pytest.raises(ConfigError) as info:
        parse_scenario(_document(radars=[radar]))
    assert info.value.field_path == 'radars.0.covariance.1'


def test_imu_table_form_equals_grade():
    table = {'vrw_3sigma': 0.03, 'accel_bias_3sigma': 0.0001, 'arw_3sigma': 0.05,
             'gyro_bias_3sigma': 1.0}
    assert parse_scenario(_document(imu=table)).imu == ImuSpec.from_grade('tactical')


def test_imu_forms_are_exclusive():
    with pytest.raises(ConfigError):
        parse_scenario(_document(imu={'grade': 'tactical', 'vrw_3sigma': 0.03}))
    with pytest.raises(ConfigError):
        parse_scenario(_document(imu={'vrw_3sigma': 0.03}))
    with pytest.raises(ConfigError):
        parse_scenario(_document(imu={'grade': 'navigation'}))


def test_rectangle_order():
    with pytest.raises(ConfigError) as info:
        parse_scenario(_document(bounds={'n_min': 10.0, 'n_max': -10.0,
                                         'e_min': 0.0, 'e_max': 1.0}))
    assert info.value.field_path == 'bounds'


def test_indefinite_radar_covariance():
    radar = {'id': 'r1', 'position': [0.0, 0.0, 0.0],
             'covariance': [[1.0, 0, 0, 0], [0, 1.0, 0, 0], [0, 0, 1.0, 0], [0, 0, 0, -1.0]]}
    with pytest.raises(ConfigError, match="invariant violated"):
        parse_scenario(_document(radars=[radar]))


def test_dump_parses_back_to_the_same_scenario():
    original = load_scenario(scenario_path('scenario1.yaml'))
    again = parse_scenario(dump_scenario(original))
    assert again.name == original.name
    assert again.imu == original.imu
    assert again.meas == original.meas
    assert again.bounds == original.bounds
    assert again.trajectory == original.trajectory
    assert again.planner == original.planner
    assert again.initial_sigmas == pytest.approx(original.initial_sigmas)
    for a, b in zip(again.radars, original.radars):
        assert a.name == b.name and a.c_r == b.c_r
        np.testing.assert_array_equal(a.p_r_n, b.p_r_n)
        np.testing.assert_array_equal(a.C_rr, b.C_rr)
    np.testing.assert_array_equal(again.reference_path, original.reference_path)
    assert scenario_document(again) == scenario_document(original)


BUNDLED = sorted(n for n in os.listdir(SCENARIO_DIR) if n.endswith('.yaml'))


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_scenarios_parse(name):
    scenario = load_scenario(scenario_path(name))
    assert scenario.radars
    assert scenario.bounds.contains(np.array([scenario.start, scenario.goal])).all()


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        load_scenario(scenario_path('missing.yaml'))
