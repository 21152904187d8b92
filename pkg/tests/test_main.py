import json
import os

import pandas as pd
import pytest

from src.main import COMMANDS, create_parser, cli_dispatch, setup_logging
from src.utils.progress import progress
from tests.conftest import scenario_path


def test_parser_defaults():
    args = create_parser().parse_args(['plan', 'scenarios/gauntlet.yaml'])
    assert args.command == 'plan'
    assert args.format == 'csv'
    assert args.dt is None and not args.quiet
    assert set(COMMANDS) == {'plan', 'evaluate', 'budget', 'montecarlo', 'validate'}


def test_parser_rejects_unknown_sources():
    with pytest.raises(SystemExit):
        create_parser().parse_args(['budget', 'x.yaml', '--at', '1', '--sources', 'wind'])


def test_budget_needs_a_snapshot():
    with pytest.raises(SystemExit):
        create_parser().parse_args(['budget', 'x.yaml'])


def test_validate():
    assert cli_dispatch(['validate', scenario_path('scenario1.yaml'), '-q']) == 0


def test_missing_scenario_is_a_config_error(tmp_path):
    assert cli_dispatch(['validate', str(tmp_path / 'nowhere.yaml'), '-q']) == 2


def test_plan_writes_its_results(tmp_path):
    out = str(tmp_path)
    assert cli_dispatch(['plan', scenario_path('clear_field.yaml'), '--out', out, '-q']) == 0
    waypoints = pd.read_csv(os.path.join(out, 'waypoints.csv'))
    assert list(waypoints.columns) == ['p_n [m]', 'p_e [m]']
    assert len(waypoints) == 2
    for name in ('polygons.csv', 'trajectory.csv', 'detection.csv', 'scenario.yaml'):
        assert os.path.exists(os.path.join(out, name))
    with open(os.path.join(out, 'iterations.json'), encoding='utf-8') as f:
        assert json.load(f)['feasible'] is True


def test_plan_as_json(tmp_path):
    out = str(tmp_path)
    assert cli_dispatch(['plan', scenario_path('clear_field.yaml'), '--out', out,
                         '--format', 'json', '-q']) == 0
    assert len(pd.read_json(os.path.join(out, 'waypoints.json'))) == 2


def test_evaluate_a_waypoint_file(tmp_path):
    path = tmp_path / 'path.csv'
    path.write_text("p_n [km],p_e [km]\n0,0\n150,20\n300,0\n", encoding='utf-8')
    out = str(tmp_path / 'out')
    assert cli_dispatch(['evaluate', scenario_path('clear_field.yaml'), str(path),
                         '--out', out, '-q']) == 0
    detection = pd.read_csv(os.path.join(out, 'detection.csv'))
    assert detection['t [s]'].iloc[0] == 0.0
    assert os.path.exists(os.path.join(out, 'scenario.yaml'))


def test_budget_command(tmp_path):
    out = str(tmp_path)
    assert cli_dispatch(['budget', scenario_path('validation.yaml'), '--dt', '10', '--at', '100',
                         '--workers', '1', '--out', out, '-q']) == 0
    budget = pd.read_csv(os.path.join(out, 'budget.csv'))
    assert len(budget) == 11
    assert budget['source'].iloc[-1] == 'Total'
    with open(os.path.join(out, 'budget_meta.json'), encoding='utf-8') as f:
        meta = json.load(f)
    assert meta['radar'] == 'radar-1' and meta['evaluations'] == 11


def test_montecarlo_command(tmp_path):
    out = str(tmp_path)
    assert cli_dispatch(['montecarlo', scenario_path('validation.yaml'), '-n', '2', '--dt', '50',
                         '--workers', '1', '--compare', '--out', out, '-q']) == 0
    ensemble = pd.read_csv(os.path.join(out, 'ensemble.csv'))
    assert 'radar-1_sigma_error [-]' in ensemble.columns
    assert os.path.exists(os.path.join(out, 'lincov.csv'))
    with open(os.path.join(out, 'ensemble_meta.json'), encoding='utf-8') as f:
        meta = json.load(f)
    assert meta['n_runs'] == 2 and meta['seed'] == 0
    assert 0.0 <= meta['coverage_3sigma'] <= 1.0


def test_quiet_switches_off_progress_bars():
    setup_logging(quiet=True)
    bar = progress(range(3))
    assert bar.disable
    bar.close()
    setup_logging()
    bar = progress(range(3), disable=False)
    assert not bar.disable
    bar.close()
    setup_logging(quiet=True)
