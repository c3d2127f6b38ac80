import json
import logging
import os

import numpy as np

from linrel import ContractionOp, LinearRelation, PivotSpace, RelationError
from utils import (decode_matrix, decode_vector, encode_matrix, encode_vector, to_jsonable,
                   validate_contraction_payload, validate_relation_payload)

logger = logging.getLogger(__name__)


def _read_json(file_path):
    with open(file_path, encoding='utf-8') as fh:
        return json.load(fh)


def load_relation(file_path):
    """Load a relation file {dim, weights, basis: [{f, fp}, ...]}"""
    try:
        data = _read_json(file_path)
        check = validate_relation_payload(data)
        if not check['valid']:
            return {'success': False, 'error': check['error']}

        space = PivotSpace(data['dim'], data.get('weights'))
        pairs = data['basis']
        if pairs:
            f = np.column_stack([decode_vector(p['f']) for p in pairs])
            fp = np.column_stack([decode_vector(p['fp']) for p in pairs])
            relation = LinearRelation.from_pairs(space, f, fp)
        else:
            relation = LinearRelation.trivial(space)

        return {
            'success': True,
            'relation': relation,
            'pairs': len(pairs),
            'rank': relation.rank,
        }

    except (OSError, json.JSONDecodeError, ValueError, TypeError, KeyError) as e:
        return {
            'success': False,
            'error': str(e)
        }


def relation_to_dict(relation):
    f, fp = relation.raw_pairs()
    return {
        'dim': relation.dim,
        'weights': relation.space.weights.tolist(),
        'basis': [{'f': encode_vector(f[:, k]), 'fp': encode_vector(fp[:, k])} for k in range(relation.rank)],
    }


def save_relation(relation, file_path):
    write_json(relation_to_dict(relation), file_path)


def load_contraction(file_path):
    """Load {matrix: [[[re, im], ...], ...], weights?} as a ContractionOp"""
    try:
        data = _read_json(file_path)
        check = validate_contraction_payload(data)
        if not check['valid']:
            return {'success': False, 'error': check['error']}

        matrix = decode_matrix(data['matrix'])
        space = PivotSpace(matrix.shape[0], data.get('weights'))
        contraction = ContractionOp.from_matrix(matrix, space)
        return {
            'success': True,
            'contraction': contraction,
            'dim': matrix.shape[0],
            'norm': contraction.norm,
        }

    except (OSError, json.JSONDecodeError, ValueError, TypeError, RelationError) as e:
        return {
            'success': False,
            'error': str(e)
        }


def save_contraction(contraction, file_path):
    write_json({'matrix': encode_matrix(contraction.matrix),
                'weights': contraction.space.weights.tolist()}, file_path)


def dumps(payload):
    """Deterministic JSON text: sorted keys, fixed indentation"""
    return json.dumps(to_jsonable(payload), sort_keys=True, indent=2, allow_nan=False) + '\n'


def write_json(payload, file_path):
    text = dumps(payload)
    directory = os.path.dirname(os.path.abspath(file_path))
    os.makedirs(directory, exist_ok=True)
    with open(file_path, 'w', encoding='utf-8', newline='\n') as fh:
        fh.write(text)
    logger.info('wrote %s (%d bytes)', file_path, len(text))
    return text


def write_report(report, file_path=None):
    """Write a Report as JSON; returns the text"""
    payload = report.to_dict()
    if file_path is None:
        return dumps(payload)
    return write_json(payload, file_path)


def write_frame(frame, file_path=None):
    """CSV with a fixed float format; returns the text"""
    text = frame.to_csv(index=False, float_format='%.17g', lineterminator='\n')
    if file_path is not None:
        with open(file_path, 'w', encoding='utf-8', newline='') as fh:
            fh.write(text)
        logger.info('wrote %s (%d rows)', file_path, len(frame))
    return text


def export_basis_table(surf, file_path):
    """Hodge basis values at the quadrature nodes as [re, im] JSON"""
    table = surf.field_table()
    payload = {
        'surface': surf.info(),
        'labels': surf.labels(),
        'lambdas': surf.family_lambdas().tolist(),
        'nodes': surf.points.tolist(),
        'weights': surf.weights.tolist(),
        'fields': [[encode_vector(node) for node in mode] for mode in table],
    }
    write_json(payload, file_path)
    return {'success': True, 'modes': int(table.shape[0]), 'nodes': int(table.shape[1]), 'path': file_path}
