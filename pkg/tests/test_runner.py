import json

import numpy as np
import pytest

from config import ConfigError, get_config
from linrel import ContractionOp, LinearRelation, PivotSpace, subspace_distance
from models import InvariantViolation, Report, RunConfig
from runner import Runner, run
from storage import load_contraction, load_relation, save_contraction, save_relation


def test_run_config_validation():
    with pytest.raises(ConfigError) as excinfo:
        RunConfig.from_dict({'command': 'surface.info', 'colour': 'red'})
    assert excinfo.value.field == 'colour'

    cases = [
        (RunConfig('mail.send'), 'command'),
        (RunConfig('surface.info', seed=-1), 'seed'),
        (RunConfig('surface.info', tolerances={'gram': 0}), 'tolerances.gram'),
        (RunConfig('surface.info', tolerances={'speed': 1e-3}), 'tolerances.speed'),
        (RunConfig('maxwell1d.range', {'n': 8}), 'n'),
        (RunConfig('maxwell1d.evolve', {'dt': -1.0}), 'dt'),
        (RunConfig('suite', {'name': 'everything'}), 'name'),
        (RunConfig('relation.check'), 'file'),
        (RunConfig('impedance.extend', {'method': 'neumann'}), 'method'),
    ]
    for run_config, field in cases:
        with pytest.raises(ConfigError) as excinfo:
            run_config.validate()
        assert excinfo.value.field == field


def test_tolerance_overrides(settings):
    run_config = RunConfig('suite', {'name': 'cayley'}, tolerances={'roundtrip': 1e-9})
    merged = run_config.settings(settings)
    assert merged.ROUNDTRIP_TOL == 1e-9
    assert merged.tolerance_ledger()['roundtrip'] == 1e-9
    assert settings.ROUNDTRIP_TOL == 1e-12
    assert RunConfig('suite', {'name': 'fk'}).settings(settings) is settings


def test_profiles():
    assert get_config('quick').SUITE_INSTANCES < get_config('default').SUITE_INSTANCES
    with pytest.raises(ConfigError):
        get_config('turbo')


def test_report_failures():
    report = Report('suite', {})
    report.check('a', True)
    report.check('b', False, 2.0, 1.0)
    assert not report.passed
    assert report.failures == ['b']
    with pytest.raises(InvariantViolation) as excinfo:
        report.raise_for_failures()
    assert excinfo.value.check == 'b'
    assert report.to_dict()['checks'][1] == {'name': 'b', 'passed': False, 'value': 2.0, 'threshold': 1.0}


def test_relation_check(tmp_path, settings):
    f = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    rel = LinearRelation.from_pairs(PivotSpace(3), f, -1j * f)
    path = tmp_path / 'rel.json'
    save_relation(rel, path)
    report = run({'command': 'relation.check', 'options': {'file': str(path), 'samples': 50}, 'seed': 3}, settings)
    assert report.passed
    verdict = report.verdicts['relation']
    assert verdict['is_dissipative']
    assert not verdict['is_maximal_dissipative']
    assert report.verdicts['cayley_domain_full'] is False
    assert report.to_dict()['config']['seed'] == 3


def test_relation_check_exports(tmp_path, settings):
    space = PivotSpace(3, [1.0, 2.0, 0.5])
    rel = LinearRelation.from_pairs(space, np.eye(3), -1j * np.eye(3))
    path = tmp_path / 'rel.json'
    save_relation(rel, path)
    options = {'file': str(path), 'adjoint': str(tmp_path / 'adj.json'), 'cayley': str(tmp_path / 'k.json')}
    report = run({'command': 'relation.check', 'options': options}, settings)
    assert report.passed
    assert report.verdicts['cayley_file'] == options['cayley']

    adjoint = load_relation(options['adjoint'])
    assert adjoint['success']
    expected = LinearRelation.from_pairs(space, np.eye(3), 1j * np.eye(3))
    assert subspace_distance(adjoint['relation'], expected) <= 1e-12
    contraction = load_contraction(options['cayley'])
    assert contraction['success']
    assert contraction['norm'] == pytest.approx(1.0)


def test_relation_check_cayley_needs_full_domain(tmp_path, settings):
    f = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    path = tmp_path / 'rel.json'
    save_relation(LinearRelation.from_pairs(PivotSpace(3), f, -1j * f), path)
    with pytest.raises(ConfigError) as excinfo:
        run({'command': 'relation.check', 'options': {'file': str(path), 'cayley': str(tmp_path / 'k.json')}},
            settings)
    assert excinfo.value.field == 'cayley'
    assert not (tmp_path / 'k.json').exists()



def test_surface_info(settings):
    report = Runner(RunConfig('surface.info', {'surface': 'flat_torus', 'kmax': 2}), settings).run()
    assert report.passed
    assert report.verdicts['b1'] == 2
    assert len(report.verdicts['modes']) == report.verdicts['n_tangential_modes']


def test_impedance_classify(settings):
    options = {'surface': 'sphere', 'lmax': 3, 'z': 'const:2', 'convergence': [2, 3], 'matrices': True}
    report = Runner(RunConfig('impedance.classify', options), settings).run()
    assert report.passed
    names = [c.name for c in report.checks]
    assert 'constant_cayley_closed_form' in names
    assert list(report.tables['convergence']['truncation']) == [2, 3]
    assert set(report.matrices) == {'K', 'T'}


def test_impedance_classify_rejects_bad_impedance(settings):
    with pytest.raises(ConfigError) as excinfo:
        Runner(RunConfig('impedance.classify', {'z': 'const:abc'}), settings).run()
    assert excinfo.value.field == 'z'
    with pytest.raises(ConfigError):
        Runner(RunConfig('impedance.classify', {'z': 'const:-1'}), settings).run()


@pytest.mark.parametrize('method', ['friedrichs', 'krein'])
def test_impedance_extend(method, settings):
    options = {'surface': 'sphere', 'lmax': 3, 'z': 'cap:theta0=0.5', 'method': method}
    report = Runner(RunConfig('impedance.extend', options), settings).run()
    assert report.passed
    assert report.verdicts['method'] == method
    assert set(report.matrices) == {'K', 'T0', 'T1'}


def test_maxwell_evolve_with_contraction_file(tmp_path, settings):
    path = tmp_path / 'k.json'
    save_contraction(ContractionOp.from_matrix(np.array([[0.0, 0.6], [0.6, 0.0]])), path)
    options = {'K': str(path), 'n': 64, 'dt': 2e-3, 'steps': 100}
    report = Runner(RunConfig('maxwell1d.evolve', options), settings).run()
    assert report.passed
    assert len(report.tables['trace']) == 101
    assert not report.verdicts['unitary']


def test_maxwell_evolve_rejects_wrong_size_contraction(tmp_path, settings):
    path = tmp_path / 'k3.json'
    save_contraction(ContractionOp.from_matrix(np.zeros((3, 3))), path)
    with pytest.raises(ConfigError) as excinfo:
        Runner(RunConfig('maxwell1d.evolve', {'K': str(path), 'n': 32}), settings).run()
    assert excinfo.value.field == 'K'


def test_maxwell_range_and_green(settings):
    report = Runner(RunConfig('maxwell1d.range', {'n': 32, 'samples': 16, 'z0': '0.5+0.5j', 'z1': 2}), settings).run()
    assert report.passed
    report = Runner(RunConfig('maxwell1d.green', {'case': 'all', 'n': 32}), settings).run()
    assert report.passed
    assert len(report.verdicts['continuum']) == 4


def test_maxwell_spectrum(settings):
    options = {'z0': 0, 'z1': 0, 'n': 200, 're_max': 2 * np.pi + 0.5, 'order': False}
    report = Runner(RunConfig('maxwell1d.spectrum', options), settings).run()
    assert report.passed
    assert report.verdicts['roots'] == 5
    assert 'observed_order' not in report.verdicts


def test_cayley_suite(settings):
    report = Runner(RunConfig('suite', {'name': 'cayley'}, seed=5), settings).run()
    assert report.passed, report.failures
    names = {c.name for c in report.checks}
    assert {'anchor_z1_zero', 'cayley_roundtrip_operator', 'constant_impedance_cayley'} <= names
    assert json.loads(json.dumps(report.to_dict()))['passed']


def test_suite_runtime_is_checked(settings):
    report = Runner(RunConfig('suite', {'name': 'duality'}), settings).run()
    runtime = next(c for c in report.checks if c.name == 'suite_runtime')
    assert runtime.passed
    assert runtime.threshold == settings.SUITE_TIME_BUDGET
    assert runtime.value is None

    tight = type('TightBudget', (settings,), {'SUITE_TIME_BUDGET': 1e-9, 'REPORT_TIMING': True})
    report = Runner(RunConfig('suite', {'name': 'duality'}), tight).run()
    assert report.failures == ['suite_runtime']
    assert set(report.timing['suites']) == {'duality'}
    assert 'seconds' in report.timing


def test_fk_suite(settings):
    report = Runner(RunConfig('suite', {'name': 'fk'}, seed=2), settings).run()
    assert report.passed, report.failures
    assert report.verdicts['fk_resolvent_gap_min'] > 0
    trend = report.tables['fk_gap_trend']
    assert (trend['resolvent_gap'] > 0).all()


def test_maxwell1d_suite_reports_its_size(settings):
    small = type('SmallMaxwell', (settings,), {'SUITE_INSTANCES': 3, 'SUITE_RESOLVENT_INSTANCES': 1,
                                               'SUITE_RESOLVENT_SAMPLES': 8})
    report = Runner(RunConfig('suite', {'name': 'maxwell1d'}), small).run()
    assert report.passed, report.failures
    assert report.verdicts['dissipative_instances'] == 3
    assert report.verdicts['resolvent_instances'] == 1
    assert report.verdicts['acceptance_sized'] is False
    resolvent = next(c for c in report.checks if c.name == 'resolvent_bound')
    assert resolvent.detail == '1 instances x 8 samples'
    assert report.verdicts['spectrum_twin_eigenvalues'] >= 0
    assert isinstance(report.verdicts['spectrum_unmatched_eigenvalues'], list)
