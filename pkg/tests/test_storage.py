import json

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from linrel import ContractionOp, LinearRelation, PivotSpace, subspace_distance
from models import Report
from storage import (dumps, export_basis_table, load_contraction, load_relation, save_contraction, save_relation,
                     write_frame, write_report)
from tracespace import build_surface
from utils import (decode_matrix, encode_matrix, parse_complex, parse_params, to_jsonable, validate_contraction_payload,
                   validate_expression, validate_relation_payload)


def test_parse_params():
    assert parse_params('x0=0.5, w=0.05,dir=right') == {'x0': '0.5', 'w': '0.05', 'dir': 'right'}
    assert parse_params('') == {}
    with pytest.raises(ValueError):
        parse_params('x0=0.5,oops')


def test_parse_complex():
    assert parse_complex('0.5 - 0.2j') == 0.5 - 0.2j
    assert parse_complex([1.0, -2.0]) == 1 - 2j
    assert parse_complex(3) == 3 + 0j
    with pytest.raises(ValueError):
        parse_complex([1.0, 2.0, 3.0])


def test_matrix_encoding():
    m = np.array([[1 + 2j, -0.0], [0.5j, 3]])
    rows = encode_matrix(m)
    assert rows[0][0] == [1.0, 2.0]
    assert rows[0][1] == [0.0, 0.0]
    assert_allclose(decode_matrix(rows), m)


def test_to_jsonable_maps_non_finite_to_null():
    data = to_jsonable({'a': np.float64('nan'), 'b': np.int64(3), 'c': np.bool_(True), 'z': 1j, 'v': np.arange(2)})
    assert data == {'a': None, 'b': 3, 'c': True, 'z': [0.0, 1.0], 'v': [0, 1]}


def test_validate_expression():
    assert validate_expression('1 + x')['valid']
    result = validate_expression('1 +')
    assert not result['valid']
    assert 'syntax' in result['error']


def test_validate_payloads():
    assert not validate_relation_payload([])['valid']
    assert 'dim' in validate_relation_payload({'basis': []})['error']
    bad_length = {'dim': 2, 'basis': [{'f': [[1, 0]], 'fp': [[0, 0], [0, 0]]}]}
    assert not validate_relation_payload(bad_length)['valid']
    assert validate_relation_payload({'dim': 1, 'basis': []})['valid']
    assert not validate_contraction_payload({'matrix': [[[0, 0], [0, 0]]]})['valid']


def test_relation_file(tmp_path, rng):
    space = PivotSpace(3, [1.0, 2.0, 0.5])
    f = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
    rel = LinearRelation.from_pairs(space, f, -1j * f)
    path = tmp_path / 'relation.json'
    save_relation(rel, path)
    result = load_relation(path)
    assert result['success']
    assert result['rank'] == 2
    assert subspace_distance(result['relation'], rel) <= 1e-12
    assert_allclose(result['relation'].space.weights, space.weights)


def test_load_relation_errors(tmp_path):
    missing = load_relation(tmp_path / 'nope.json')
    assert not missing['success']
    path = tmp_path / 'bad.json'
    path.write_text(json.dumps({'dim': 2}))
    result = load_relation(path)
    assert not result['success']
    assert 'basis' in result['error']


def test_contraction_file(tmp_path):
    k = ContractionOp.from_matrix(np.array([[0.0, 0.5j], [0.5, 0.0]]))
    path = tmp_path / 'k.json'
    save_contraction(k, path)
    result = load_contraction(path)
    assert result['success']
    assert result['dim'] == 2
    assert_allclose(result['contraction'].matrix, k.matrix)

    path.write_text(json.dumps({'matrix': encode_matrix(3 * np.eye(2))}))
    result = load_contraction(path)
    assert not result['success']
    assert 'exceeds' in result['error']


def test_report_output_is_deterministic(tmp_path):
    report = Report('surface.info', {'command': 'surface.info'}, verdicts={'b': 1, 'a': float('inf')})
    report.check('gram_identity', True, 1e-15, 1e-9)
    report.tables['t'] = pd.DataFrame({'x': [1.0, np.nan]})
    text = write_report(report)
    assert text == write_report(report)
    data = json.loads(text)
    assert data['verdicts']['a'] is None
    assert data['tables']['t'][1]['x'] is None
    assert list(data) == sorted(data)

    path = tmp_path / 'out' / 'report.json'
    assert write_report(report, path) == text
    assert path.read_text() == text
    assert dumps({'z': 1j}) == '{\n  "z": [\n    0.0,\n    1.0\n  ]\n}\n'


def test_frame_csv_reads_back_exactly(tmp_path):
    energy = [1.0, 0.9999999999999999, 0.1 + 0.2, 1 / 3]
    frame = pd.DataFrame({'step': [0, 1, 2, 3], 't': [0.0, 0.001, 0.002, 0.003], 'energy': energy})
    path = tmp_path / 'trace.csv'
    text = write_frame(frame, path)
    assert text.splitlines()[0] == 'step,t,energy'
    assert path.read_text() == text
    back = pd.read_csv(path, float_precision='round_trip')
    assert back['energy'].tolist() == energy
    assert back['t'].tolist() == frame['t'].tolist()


def test_export_basis_table(tmp_path):
    surf = build_surface('flat_torus', 1, quad_factor=1)
    result = export_basis_table(surf, tmp_path / 'basis.json')
    assert result['modes'] == surf.dim
    data = json.loads((tmp_path / 'basis.json').read_text())
    assert len(data['fields']) == surf.dim
    assert data['surface']['b1'] == 2
