"""
Mixed-order duality in a diagonal weight model.

A weight vector s (pivot coordinates) defines the dual pair
||h||_{-,+} = ||s h||_H and ||h||_{+,-} = ||h / s||_H around the pivot H.
"""

import logging
from collections import namedtuple
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

logger = logging.getLogger(__name__)

MINUS_PLUS = '-,+'
PIVOT = 'pivot'
PLUS_MINUS = '+,-'
SIDES = (MINUS_PLUS, PIVOT, PLUS_MINUS)

# signature -> (source, target) of T and of T^#
SIGNATURES = {
    'A1': ((MINUS_PLUS, PLUS_MINUS), (MINUS_PLUS, PLUS_MINUS)),
    'A2': ((PIVOT, MINUS_PLUS), (PLUS_MINUS, PIVOT)),
    'A3': ((MINUS_PLUS, PIVOT), (PIVOT, PLUS_MINUS)),
    'A4': ((MINUS_PLUS, MINUS_PLUS), (PLUS_MINUS, PLUS_MINUS)),
}

UnitaryMaps = namedtuple('UnitaryMaps', ['h_to_minus_plus', 'h_to_plus_minus', 'minus_plus_to_plus_minus'])


class MOrderError(ValueError):
    """Invalid weights, sides or signatures"""


@dataclass(frozen=True, eq=False)
class MOrderWeights:
    s: np.ndarray
    pivot: np.ndarray = None

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float).ravel()
        if s.size == 0 or not np.all(np.isfinite(s)) or not np.all(s > 0):
            raise MOrderError('mixed-order weights must be finite and strictly positive')
        pivot = np.ones_like(s) if self.pivot is None else np.asarray(self.pivot, dtype=float).ravel()
        if pivot.shape != s.shape or not np.all(pivot > 0):
            raise MOrderError('pivot weights must be positive and match the mixed-order weights')
        object.__setattr__(self, 's', s)
        object.__setattr__(self, 'pivot', pivot)

    @property
    def dim(self):
        return self.s.size

    def scale(self, side):
        """Diagonal S with ||h||_side = ||S h||_H"""
        if side == MINUS_PLUS:
            return self.s
        if side == PLUS_MINUS:
            return 1.0 / self.s
        if side == PIVOT:
            return np.ones_like(self.s)
        raise MOrderError(f"unknown side '{side}' (choose from {', '.join(SIDES)})")

    @property
    def minus_plus(self):
        return np.diag(self.s)

    @property
    def plus_minus(self):
        return np.diag(1.0 / self.s)

    def midpoint(self):
        """Geometric mean of the dual weights; identically 1"""
        return np.sqrt(self.scale(MINUS_PLUS) * self.scale(PLUS_MINUS))


@dataclass(frozen=True, eq=False)
class MOrderVector:
    coeffs: np.ndarray
    side: str = PIVOT

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex).ravel()
        if not np.all(np.isfinite(c)):
            raise MOrderError('coefficients must be finite')
        if self.side not in SIDES:
            raise MOrderError(f"unknown side '{self.side}'")
        object.__setattr__(self, 'coeffs', c)

    def norm(self, weights):
        return dual_norm(self, weights, self.side)


def _check_dim(weights, *vectors):
    for v in vectors:
        if v.size != weights.dim:
            raise MOrderError(f"dimension mismatch: {v.size} coefficients for {weights.dim} weights")


def _coeffs(h):
    return h.coeffs if isinstance(h, MOrderVector) else np.asarray(h, dtype=complex).ravel()


def pairing(u, v, weights):
    """<u|v> for u in H_{-,+}, v in H_{+,-}; the pivot inner product in coordinates"""
    u, v = _coeffs(u), _coeffs(v)
    _check_dim(weights, u, v)
    return complex(np.sum(weights.pivot * u * np.conj(v)))


def dual_norm(h, weights, side=None):
    """Closed-form weighted norm of h read in `side`"""
    side = side or (h.side if isinstance(h, MOrderVector) else PIVOT)
    c = _coeffs(h)
    _check_dim(weights, c)
    return float(np.sqrt(np.sum(weights.pivot * np.abs(weights.scale(side) * c) ** 2)))


def optimizer(h, weights, side):
    """g attaining sup |<g, h>| / ||g||_dual, i.e. s^{-+2} h"""
    c = _coeffs(h)
    if side == PLUS_MINUS:
        return c / weights.s ** 2
    if side == MINUS_PLUS:
        return c * weights.s ** 2
    raise MOrderError("supremum form is defined for the '-,+' and '+,-' sides")


def dual_norm_sup(h, weights, side, trials=0, rng=None):
    """Supremum form of the dual norm: ratio at the optimizer, checked against random competitors"""
    c = _coeffs(h)
    _check_dim(weights, c)
    other = MINUS_PLUS if side == PLUS_MINUS else PLUS_MINUS

    def ratio(g):
        denom = dual_norm(g, weights, other)
        if denom == 0.0:
            return 0.0
        value = pairing(g, c, weights) if side == PLUS_MINUS else pairing(c, g, weights)
        return abs(value) / denom

    best = ratio(optimizer(c, weights, side))
    if trials:
        rng = rng or np.random.default_rng(0)
        for _ in range(trials):
            g = rng.standard_normal(c.size) + 1j * rng.standard_normal(c.size)
            best = max(best, ratio(g))
    return best


def sharp_adjoint(t, signature='A1', weights=None):
    """T^# with <T f | g> = <f | T^# g>; the conjugate transpose in pivot coordinates"""
    if signature not in SIGNATURES:
        raise MOrderError(f"unknown signature '{signature}' (choose from {', '.join(SIGNATURES)})")
    t = np.atleast_2d(np.asarray(t, dtype=complex))
    if weights is None:
        return t.conj().T
    w = weights.pivot
    return (t.conj().T * w[None, :]) / w[:, None]


def operator_norm(t, weights, source, target):
    """||T||_{source -> target} = ||S_target T S_source^-1||_2"""
    t = np.atleast_2d(np.asarray(t, dtype=complex))
    root = np.sqrt(weights.pivot)
    left = root * weights.scale(target)
    right = root * weights.scale(source)
    return float(la.svdvals((left[:, None] * t) / right[None, :])[0])


def sharp_report(t, signature, weights):
    """Norms of T and T^# between the spaces named by the signature"""
    sharp = sharp_adjoint(t, signature, weights)
    (src, tgt), (sharp_src, sharp_tgt) = SIGNATURES[signature]
    return {
        'signature': signature,
        'spaces': [src, tgt],
        'sharp_spaces': [sharp_src, sharp_tgt],
        'norm': operator_norm(t, weights, src, tgt),
        'sharp_norm': operator_norm(sharp, weights, sharp_src, sharp_tgt),
    }


def unitary_maps(weights):
    """(U_{H->H_{-,+}}, U_{H->H_{+,-}}, U_{H_{-,+}->H_{+,-}}) = (diag(1/s), diag(s), diag(s^2))"""
    s = weights.s
    return UnitaryMaps(np.diag(1.0 / s), np.diag(s), np.diag(s ** 2))
