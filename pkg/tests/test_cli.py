# Import the necessary libraries.
import json

import numpy as np
import pytest

from debias_bandit import cli
from debias_bandit.geometry import ActionSet


@pytest.fixture
def actions_file(tmp_path, triangle):
    path = tmp_path / 'actions.json'
    triangle.save(path)
    return path


@pytest.fixture
def config_file(tmp_path, triangle, triangle_theta):
    def write(algorithm, name):
        path = tmp_path / name
        document = {'instance': {'actions': triangle.to_dict(), 'theta': triangle_theta.to_dict()}, 'algorithm': algorithm, 'T': 512, 'reps': 2, 'seed': 3}
        path.write_text(json.dumps(document))
        return path
    return write


def test_c_optimal_design(actions_file, capsys):
    assert cli.main(['--quiet', 'design', 'c-opt', '--actions', str(actions_file), '--c-target', 'last']) == 0
    document = json.loads(capsys.readouterr().out)
    assert document['value'] == pytest.approx(4.0, rel=1e-9)
    assert sum(document['weights'].values()) == pytest.approx(1.0)


def test_g_optimal_design(actions_file, capsys):
    assert cli.main(['--quiet', 'design', 'g-opt', '--actions', str(actions_file)]) == 0
    assert json.loads(capsys.readouterr().out)['value'] == pytest.approx(3.0, rel=1e-3)


def test_delta_optimal_design(actions_file, tmp_path, capsys):
    gaps = tmp_path / 'gaps.json'
    gaps.write_text(json.dumps([0.1, 0.3, 0.15]))
    assert cli.main(['--quiet', 'design', 'delta-opt', '--actions', str(actions_file), '--gaps', str(gaps)]) == 0
    assert json.loads(capsys.readouterr().out)['value'] > 0


def test_delta_optimal_needs_gaps(actions_file):
    assert cli.main(['--quiet', 'design', 'delta-opt', '--actions', str(actions_file)]) == 2


def test_custom_target(actions_file, capsys):
    assert cli.main(['--quiet', 'design', 'c-opt', '--actions', str(actions_file), '--c-target', '0,0,1']) == 0
    assert json.loads(capsys.readouterr().out)['value'] == pytest.approx(4.0, rel=1e-9)
    assert cli.main(['--quiet', 'design', 'c-opt', '--actions', str(actions_file), '--c-target', '0,1']) == 2


def test_kappa(actions_file, capsys):
    assert cli.main(['--quiet', 'kappa', '--actions', str(actions_file), '--directions', '50']) == 0
    document = json.loads(capsys.readouterr().out)
    assert document['kappa_star'] == pytest.approx(4.0, rel=1e-9)
    assert document['kappa_star_margin_form'] == pytest.approx(4.0, rel=1e-6)
    assert document['margin_ratio'] == pytest.approx(1 / 3, rel=1e-9)


def test_invalid_action_set_exits_with_two(tmp_path):
    path = tmp_path / 'flat.json'
    ActionSet(np.array([[1.0, 0.0], [2.0, 0.0]]), np.array([1, -1])).save(path)
    assert cli.main(['--quiet', 'kappa', '--actions', str(path)]) == 2


def test_missing_file_exits_with_one(tmp_path):
    assert cli.main(['--quiet', 'kappa', '--actions', str(tmp_path / 'missing.json')]) == 1


def test_instance(tmp_path):
    out = tmp_path / 'gap'
    assert cli.main(['--quiet', 'instance', 'gap', '--kappa', '4', '--d', '4', '--dmin', '0.05', '--dneq', '0.1', '--out', str(out)]) == 0
    assert json.loads((out / 'meta.json').read_text())['family'] == 'gap'
    assert cli.main(['--quiet', 'instance', 'worst-case', '--kappa', '4', '--d', '2', '--out', str(out)]) == 2


def test_biased_evaluation_instance(tmp_path):
    out = tmp_path / 'biased'
    assert cli.main(['--quiet', 'instance', 'biased-evaluation', '--kappa', '4', '--d', '2', '--out', str(out)]) == 0
    meta = json.loads((out / 'meta.json').read_text())
    assert meta['family'] == 'biased-evaluation'
    assert meta['omega_override'] == -0.9


def test_simulate_then_fit_slope(config_file, tmp_path, capsys):
    out = tmp_path / 'run'
    assert cli.main(['--quiet', 'simulate', '--config', str(config_file('fpe', 'fpe.json')), '--out', str(out)]) == 0
    assert json.loads(capsys.readouterr().out)['final_mean_regret'] >= 0
    assert cli.main(['--quiet', 'fit-slope', '--in', str(out / 'regret.csv')]) == 0
    assert set(json.loads(capsys.readouterr().out)) == {'slope', 'intercept', 'r_squared'}


def test_compare(config_file, capsys):
    paths = [str(config_file('fpe', 'fpe.json')), str(config_file('oracle', 'oracle.json'))]
    assert cli.main(['--quiet', 'compare', '--configs', *paths]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == 'checkpoint,fpe,oracle'
    assert all(line.endswith(',0.0') for line in lines[1:])


def test_bad_config_exits_with_two(tmp_path):
    path = tmp_path / 'config.json'
    path.write_text(json.dumps({'instance': 'x', 'algorithm': 'fpe', 'T': 10, 'unknown': 1}))
    assert cli.main(['--quiet', 'simulate', '--config', str(path), '--out', str(tmp_path / 'out')]) == 2
