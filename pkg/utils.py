import dataclasses
import math

import numpy as np
from jinja2 import TemplateSyntaxError
from jinja2.sandbox import SandboxedEnvironment


def parse_params(text):
    """Parse 'k=v,k2=v2' into a dict of stripped strings"""
    params = {}
    for item in str(text or '').split(','):
        item = item.strip()
        if not item:
            continue
        key, sep, value = item.partition('=')
        if not sep or not key.strip():
            raise ValueError(f"expected key=value, got '{item}'")
        params[key.strip()] = value.strip()
    return params


def parse_complex(value):
    """Accept numbers, '0.5-0.2j' strings and [re, im] pairs"""
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ValueError(f"complex pair needs two entries, got {len(value)}")
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, str):
        return complex(value.replace(' ', ''))
    return complex(value)


def complex_to_json(z):
    z = complex(z)
    return [_clean_float(z.real), _clean_float(z.imag)]


def _clean_float(x):
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"non-finite value {x} cannot be serialized")
    # avoid '-0.0' in reports
    return x + 0.0


def encode_vector(vec):
    return [complex_to_json(z) for z in np.asarray(vec).ravel()]


def decode_vector(data):
    return np.array([parse_complex(z) for z in data], dtype=complex)


def encode_matrix(mat):
    """Row-major list of rows of [re, im]"""
    mat = np.atleast_2d(np.asarray(mat))
    return [encode_vector(row) for row in mat]


def decode_matrix(rows):
    mat = np.array([[parse_complex(z) for z in row] for row in rows], dtype=complex)
    if mat.ndim != 2:
        raise ValueError('matrix rows must have equal length')
    return mat


def to_jsonable(obj):
    """Convert numpy scalars, complex numbers and dataclasses to plain JSON values"""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        if hasattr(obj, 'to_dict'):
            return to_jsonable(obj.to_dict())
        return to_jsonable(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return encode_matrix(obj) if obj.ndim == 2 else encode_vector(obj)
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _clean_float(obj) if math.isfinite(obj) else None
    if isinstance(obj, (complex, np.complexfloating)):
        return complex_to_json(obj)
    return obj


def validate_expression(expr):
    """Validate a spectral impedance expression in x = lambda^2"""
    try:
        SandboxedEnvironment().compile_expression(expr)
        return {'valid': True}
    except TemplateSyntaxError as e:
        return {
            'valid': False,
            'error': f"Expression syntax error: {str(e)}"
        }
    except Exception as e:
        return {
            'valid': False,
            'error': f"Expression validation error: {str(e)}"
        }


def validate_relation_payload(data):
    """Validate the JSON structure of a relation file"""
    if not isinstance(data, dict):
        return {'valid': False, 'error': 'relation file must contain a JSON object'}

    missing = [key for key in ('dim', 'basis') if key not in data]
    if missing:
        return {'valid': False, 'error': f"Missing required fields: {', '.join(missing)}"}

    dim = data['dim']
    if not isinstance(dim, int) or dim < 1:
        return {'valid': False, 'error': f"dim must be a positive integer, got {dim!r}"}

    weights = data.get('weights')
    if weights is not None and len(weights) != dim:
        return {'valid': False, 'error': f"Expected {dim} weights, found {len(weights)}"}

    for idx, pair in enumerate(data['basis']):
        if not isinstance(pair, dict) or 'f' not in pair or 'fp' not in pair:
            return {'valid': False, 'error': f"basis entry {idx} needs 'f' and 'fp'"}
        if len(pair['f']) != dim or len(pair['fp']) != dim:
            return {'valid': False, 'error': f"basis entry {idx} has wrong length (expected {dim})"}

    return {'valid': True, 'dim': dim, 'pairs': len(data['basis'])}


def validate_contraction_payload(data):
    """Validate the JSON structure of a contraction file"""
    if not isinstance(data, dict) or 'matrix' not in data:
        return {'valid': False, 'error': "contraction file needs a 'matrix' field"}
    rows = data['matrix']
    if not rows or any(len(row) != len(rows) for row in rows):
        return {'valid': False, 'error': 'contraction matrix must be square'}
    return {'valid': True, 'dim': len(rows)}
