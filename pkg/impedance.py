"""
Impedance boundary operators S_gamma Mul_z S_gamma on truncated Hodge spaces,
their Cayley contractions and the boundary conditions assembled from them.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.linalg as la
from jinja2 import StrictUndefined
from jinja2.sandbox import SandboxedEnvironment

from config import Config
from linrel import (ContractionOp, LinearRelation, PivotSpace, RelationError, cayley, classify_relation, friedrichs,
                    krein, resolvent_of_relation, resolvent_order_margin, subspace_distance)
from tracespace import build_surface, s_gamma, trace_weights
from utils import parse_params, validate_expression

logger = logging.getLogger(__name__)

KINDS = ('constant', 'f_dev', 'pointwise', 'indicator', 'random_field', 'sector')

_expressions = SandboxedEnvironment(undefined=StrictUndefined)
_expression_context = {
    'sqrt': np.emath.sqrt,
    'exp': np.exp,
    'log': np.emath.log,
    'abs': np.abs,
    'pi': np.pi,
    'I': 1j,
}


class ImpedanceError(ValueError):
    """Invalid impedance coefficient or violated accretivity"""


@dataclass(frozen=True, eq=False)
class ImpedanceSpec:
    kind: str
    params: dict = field(default_factory=dict)
    label: str = ''
    fn: object = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ImpedanceError(f"unknown impedance kind '{self.kind}'")

    @property
    def is_spectral(self):
        return self.kind == 'f_dev'

    def to_dict(self):
        params = {k: ([v.real, v.imag] if isinstance(v, complex) else v) for k, v in self.params.items()}
        return {'kind': self.kind, 'label': self.label, 'params': params}

    # evaluation

    def spectral_values(self, lam2):
        """f(lambda^2) for the diagonal kind"""
        if not self.is_spectral:
            raise ImpedanceError(f"'{self.kind}' impedance has no spectral form")
        compiled = self.fn
        values = []
        for x in np.asarray(lam2, dtype=float):
            try:
                values.append(complex(compiled(x=float(x), **_expression_context)))
            except Exception as e:
                raise ImpedanceError(f"cannot evaluate '{self.params['expr']}' at x={x:g}: {e}")
        return np.array(values)

    def node_values(self, surf):
        """z at the quadrature nodes of surf"""
        if self.kind == 'constant':
            return np.full(surf.weights.size, complex(self.params['alpha']))
        if self.kind == 'pointwise':
            return np.asarray(self.fn(surf.points, surf.normals), dtype=complex) * np.ones(surf.weights.size)
        if self.kind == 'indicator':
            dist = np.concatenate([c.cap_distance(loc) for c, loc in zip(surf.charts, surf.local)])
            return np.where(dist <= self.params['theta0'], complex(self.params['value']), 0.0 + 0.0j)
        if self.kind == 'sector':
            profile = np.concatenate([c.profile(loc) for c, loc in zip(surf.charts, surf.local)])
            r = self.params['r'] + self.params['amp'] * profile
            return r * np.exp(1j * self.params['phi'])
        if self.kind == 'random_field':
            coeffs = random_coefficients(surf, self.params['s'], self.params['truncation'], self.params['seed'])
            values = coeffs @ surf.scalar_table()[:coeffs.size]
            if self.params['positive']:
                values = np.maximum(values, 0.0)
            return values.astype(complex)
        raise ImpedanceError(f"'{self.kind}' impedance has no pointwise form")


# factories

def constant(alpha):
    return ImpedanceSpec('constant', {'alpha': complex(alpha)}, f'const:{alpha}')


def f_dev(expr):
    """z = f(-Dev) with f given as an expression in x = lambda^2"""
    check = validate_expression(expr)
    if not check['valid']:
        raise ImpedanceError(f"invalid spectral expression '{expr}': {check['error']}")
    compiled = _expressions.compile_expression(expr, undefined_to_none=False)
    return ImpedanceSpec('f_dev', {'expr': expr}, f'f-dev:{expr}', fn=compiled)



def pointwise(fn, label='pointwise'):
    """z(x) from a callable (points, normals) -> values"""
    return ImpedanceSpec('pointwise', {}, label, fn=fn)


def indicator(theta0, value=1.0):
    """value on the cap of angular radius theta0, 0 (perfect conductor) elsewhere"""
    if theta0 <= 0:
        raise ImpedanceError('cap radius theta0 must be positive')
    return ImpedanceSpec('indicator', {'theta0': float(theta0), 'value': complex(value)}, f'cap:theta0={theta0}')


def sector(phi, r=1.0, amp=0.0):
    """z = (r + amp * profile) e^{i phi}, profile in [-1, 1]"""
    if abs(phi) > np.pi / 2 + 1e-12:
        raise ImpedanceError(f"sector angle |phi| = {abs(phi):g} exceeds pi/2")
    if r <= 0 or abs(amp) >= r:
        raise ImpedanceError('sector modulus needs r > |amp| >= 0')
    return ImpedanceSpec('sector', {'phi': float(phi), 'r': float(r), 'amp': float(amp)},
                         f'sector:phi={phi},r={r},amp={amp}')


def parse_impedance(text):
    """const:1.0 | f-dev:expr | cap:theta0=0.5 | random:s=1.2,seed=7 | sector:phi=0.3,r=1"""
    kind, _, rest = str(text).partition(':')
    kind = kind.strip().lower()
    try:
        if kind in ('const', 'constant'):
            return constant(complex(rest.replace(' ', '')))
        if kind == 'f-dev':
            return f_dev(rest)
        if kind == 'cap':
            p = parse_params(rest)
            return indicator(float(p['theta0']), complex(p.get('value', '1')))
        if kind == 'sector':
            p = parse_params(rest)
            return sector(float(p['phi']), float(p.get('r', 1.0)), float(p.get('amp', 0.0)))
        if kind == 'random':
            p = parse_params(rest)
            truncation = p.get('truncation')
            return random_impedance(float(p['s']), int(truncation) if truncation else None,
                                    int(p.get('seed', Config.DEFAULT_SEED)),
                                    str(p.get('positive', '1')).lower() not in ('0', 'false', 'no'))
    except (KeyError, ValueError) as e:
        if isinstance(e, ImpedanceError):
            raise
        raise ImpedanceError(f"cannot parse impedance '{text}': {e}")
    raise ImpedanceError(f"unknown impedance '{text}' (const:, f-dev:, cap:, sector:, random:)")


# random coefficients

def random_coefficients(surf, s, truncation=None, seed=0):
    """xi_k ~ N(0, lambda_k^{-2s}), one Philox stream per (seed, k)"""
    if s <= 0.5:
        raise ImpedanceError(f"variance exponent s must exceed 1/2, got {s}")
    count = surf.n_scalar if truncation is None else min(int(truncation), surf.n_scalar)
    lam = surf.lambdas[:count]
    xi = np.empty(count)
    for k in range(count):
        gen = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, k])))
        xi[k] = gen.standard_normal()
    return xi * lam ** -s


def random_impedance(s, truncation=None, seed=0, positive=True):
    if s <= 0.5:
        raise ImpedanceError(f"variance exponent s must exceed 1/2, got {s}")
    params = {'s': float(s), 'truncation': truncation, 'seed': int(seed), 'positive': bool(positive)}
    return ImpedanceSpec('random_field', params, f'random:s={s},seed={seed}')


def sample_random_impedance(surf, s, truncation=None, seed=0, positive=True):
    """Random field z = max(0, sum xi_k u_k); returns the ImpedanceSpec and its coefficient vector"""
    spec = random_impedance(s, truncation, seed, positive)
    coeffs = random_coefficients(surf, s, truncation, seed)
    values = spec.node_values(surf)
    logger.info('random impedance s=%g seed=%d: %.1f%% of nodes at zero', s, seed,
                100.0 * float(np.mean(values.real == 0.0)))
    return spec, coeffs


# boundary operators

def mulz_matrix(surf, z, tol=None):
    """Galerkin matrix G_ab = int z v_b . conj(v_a) over the Hodge basis"""
    tol = Config.DISSIPATIVE_TOL if tol is None else tol
    if z.is_spectral:
        lam2 = surf.family_lambdas() ** 2
        lam2[surf.blocks[1]] = 0.0
        values = z.spectral_values(lam2)
        if np.min(values.real) < -tol:
            raise ImpedanceError(f"Re f(lambda^2) = {np.min(values.real):.3e} < 0 on the spectrum")
        return np.diag(values)
    values = z.node_values(surf)
    if np.min(values.real) < -tol:
        raise ImpedanceError(f"Re z = {np.min(values.real):.3e} < 0 at a quadrature node")
    return surf.gram(density=values)


@dataclass(frozen=True, eq=False)
class BoundaryOperator:
    surface: object
    spec: ImpedanceSpec
    mulz: np.ndarray
    matrix: np.ndarray

    @property
    def accretivity_margin(self):
        t = self.matrix
        return float(la.eigvalsh((t + t.conj().T) / 2)[0])

    @property
    def is_hermitian(self):
        t = self.matrix
        return float(np.linalg.norm(t - t.conj().T, 2)) <= Config.PSD_TOL * max(1.0, np.linalg.norm(t, 2))

    @property
    def is_normal(self):
        t = self.matrix
        scale = max(1.0, np.linalg.norm(t, 2) ** 2)
        return float(np.linalg.norm(t @ t.conj().T - t.conj().T @ t, 2)) <= Config.PSD_TOL * scale

    def verdict(self):
        margin = self.accretivity_margin
        hermitian = self.is_hermitian
        return {
            'accretive': margin >= -Config.PSD_TOL,
            'accretivity_margin': margin,
            'hermitian': hermitian,
            'normal': self.is_normal,
            'selfadjoint': hermitian,
            'nonnegative': hermitian and margin >= -Config.PSD_TOL,
        }


def boundary_operator(surf, z):
    """T = S_gamma Mul_z S_gamma in Hodge coordinates"""
    g = mulz_matrix(surf, z)
    sg = s_gamma(surf)
    return BoundaryOperator(surf, z, g, sg @ g @ sg)


def cayley_kz(bop):
    """K_z = (T - I)(T + I)^-1, the Cayley transform of Gr(-iT)"""
    margin = bop.accretivity_margin
    if margin < -Config.PSD_TOL:
        raise ImpedanceError(f"boundary operator is not accretive (margin {margin:.3e})")
    t = bop.matrix
    eye = np.eye(t.shape[0])
    try:
        k = la.solve(t + eye, t - eye)
    except la.LinAlgError as e:
        raise ImpedanceError(f"T + I is singular: {e}")
    return ContractionOp.from_matrix(k)


@dataclass(frozen=True, eq=False)
class BoundaryCondition:
    """T0 (pi-side coefficients) + T1 (gamma-side coefficients) = 0"""

    surface: object
    contraction: ContractionOp
    t0: np.ndarray
    t1: np.ndarray

    @property
    def dim(self):
        return self.t0.shape[0]

    def theta(self):
        """Theta in (Gamma0, Gamma1) = (pi, i gamma) coordinates: ker [T0, -i T1]"""
        kernel = la.null_space(np.hstack([self.t0, -1j * self.t1]), rcond=Config.RANK_TOL)
        n = self.dim
        return LinearRelation.from_scaled(PivotSpace(n), kernel[:n], kernel[n:])

    def theta_v(self):
        """{(U_pi Gamma0, (U_pi^#)^-1 Gamma1)}"""
        s = trace_weights(self.surface).s
        return self.theta().mapped(np.diag(s), np.diag(1.0 / s))


def assemble_condition(surf, contraction):
    """(I + K) U_pi pi + (I - K) (U_pi^#)^-1 gamma = 0"""
    k = contraction.matrix
    if k.shape[0] != surf.dim:
        raise ImpedanceError(f"contraction is {k.shape[0]}-dimensional, surface basis has {surf.dim} modes")
    if contraction.norm > 1 + Config.CONTRACTION_TOL:
        raise ImpedanceError(f"||K|| = {contraction.norm:.3e} exceeds 1")
    s = trace_weights(surf).s
    eye = np.eye(surf.dim)
    return BoundaryCondition(surf, contraction, (eye + k) * s[None, :], (eye - k) / s[None, :])


@dataclass(frozen=True)
class ConditionVerdict:
    m_dissipative: bool
    selfadjoint: bool
    dissipative_margin: float
    rank: int
    dim: int
    contraction_recovery: float
    unitary: bool

    def to_dict(self):
        return {
            'm_dissipative': self.m_dissipative,
            'selfadjoint': self.selfadjoint,
            'dissipative_margin': self.dissipative_margin,
            'rank': self.rank,
            'dim': self.dim,
            'contraction_recovery': self.contraction_recovery,
            'unitary': self.unitary,
        }


def classify_condition(cond):
    theta = cond.theta()
    verdict = classify_relation(theta)
    try:
        recovered = cayley(cond.theta_v())
        error = float(np.linalg.norm(recovered.matrix - cond.contraction.matrix, 2)) if recovered.is_full else np.inf
    except RelationError:
        error = np.inf
    return ConditionVerdict(
        m_dissipative=verdict.is_maximal_dissipative,
        selfadjoint=verdict.is_selfadjoint,
        dissipative_margin=verdict.margin,
        rank=verdict.rank,
        dim=verdict.dim,
        contraction_recovery=error,
        unitary=cond.contraction.is_unitary(),
    )


def classify_impedance(surf, z):
    """Boundary operator, Cayley contraction and assembled condition verdicts for one impedance"""
    bop = boundary_operator(surf, z)
    k = cayley_kz(bop)
    cond = assemble_condition(surf, k)
    return {
        'surface': surf.info(),
        'impedance': z.to_dict(),
        'operator': bop.verdict(),
        'condition': classify_condition(cond).to_dict(),
        'contraction_norm': k.norm,
    }


# Friedrichs / Krein conditions

@dataclass(frozen=True, eq=False)
class FKResult:
    psi: LinearRelation
    friedrichs: LinearRelation
    krein: LinearRelation
    condition_f: BoundaryCondition
    condition_k: BoundaryCondition
    gap: float
    resolvent_gap: float
    ordering_margin: float
    domain_dim: int

    def summary(self):
        return {
            'dim': self.psi.dim,
            'domain_dim': self.domain_dim,
            'gap': self.gap,
            'resolvent_gap': self.resolvent_gap,
            'ordering_margin': self.ordering_margin,
            'ordered': self.ordering_margin >= -Config.PSD_TOL,
            'friedrichs': classify_condition(self.condition_f).to_dict(),
            'krein': classify_condition(self.condition_k).to_dict(),
        }


def default_domain(bop, threshold=None):
    """Eigenvectors of T whose eigenvalue (= Galerkin image norm) is at least threshold"""
    threshold = Config.FK_DOMAIN_THRESHOLD if threshold is None else threshold
    t = bop.matrix
    eigs, vecs = la.eigh((t + t.conj().T) / 2)
    return vecs[:, eigs >= threshold]


def fk_extensions(surf, z, restricted_domain=None, threshold=None):
    """Friedrichs and Krein conditions of Psi = Gr(T restricted to the given domain)"""
    bop = boundary_operator(surf, z)
    verdict = bop.verdict()
    if not verdict['nonnegative']:
        raise ImpedanceError('F/K extensions need a nonnegative boundary operator (real z >= 0)')
    t = (bop.matrix + bop.matrix.conj().T) / 2
    dom = default_domain(bop, threshold) if restricted_domain is None else np.asarray(restricted_domain, dtype=complex)
    space = PivotSpace(surf.dim)
    psi = LinearRelation.from_pairs(space, dom, t @ dom)
    psi_f, psi_k = friedrichs(psi), krein(psi)
    rot_f, rot_k = psi_f.rotated(-1j), psi_k.rotated(-1j)
    cond_f = assemble_condition(surf, cayley(rot_f))
    cond_k = assemble_condition(surf, cayley(rot_k))
    spread = resolvent_of_relation(psi_k) - resolvent_of_relation(psi_f)
    result = FKResult(
        psi=psi,
        friedrichs=psi_f,
        krein=psi_k,
        condition_f=cond_f,
        condition_k=cond_k,
        gap=subspace_distance(rot_f, rot_k),
        resolvent_gap=float(np.linalg.norm(spread, 'fro') / np.sqrt(surf.dim)),
        ordering_margin=resolvent_order_margin(psi_f, psi_k),
        domain_dim=int(dom.shape[1]),
    )
    logger.info('F/K on %s truncation=%d: domain %d/%d, gap %.3e', surf.name, surf.truncation,
                result.domain_dim, surf.dim, result.gap)
    return result


# truncation studies

def frame_invariance(surf, z, rotation):
    """Compare verdicts and conjugated operators under a rotation of the harmonic frame"""
    rotated = surf.with_harmonic_rotation(rotation)
    base, turned = boundary_operator(surf, z), boundary_operator(rotated, z)
    q = np.eye(surf.dim)
    h = surf.blocks[1]
    q[h, h] = rotation
    residual = float(np.max(np.abs(turned.matrix - q.T @ base.matrix @ q)))
    verdicts = (classify_condition(assemble_condition(surf, cayley_kz(base))).to_dict(),
                classify_condition(assemble_condition(rotated, cayley_kz(turned))).to_dict())
    same = all(verdicts[0][k] == verdicts[1][k] for k in ('m_dissipative', 'selfadjoint', 'rank', 'unitary'))
    return {'conjugation_residual': residual, 'verdicts_equal': same and base.verdict()['accretive'] == turned.verdict()['accretive']}


def convergence_table(name, truncations, z, quad_factor=None):
    rows = []
    for trunc in truncations:
        surf = build_surface(name, trunc, quad_factor)
        report = classify_impedance(surf, z)
        rows.append({
            'truncation': trunc,
            'dim': surf.dim,
            'accretivity_margin': report['operator']['accretivity_margin'],
            'hermitian': report['operator']['hermitian'],
            'm_dissipative': report['condition']['m_dissipative'],
            'selfadjoint': report['condition']['selfadjoint'],
            'dissipative_margin': report['condition']['dissipative_margin'],
            'contraction_recovery': report['condition']['contraction_recovery'],
        })
    return pd.DataFrame(rows)


def fk_gap_trend(name, truncations, z, quad_factor=None, threshold=None):
    """F-vs-K gap per truncation.

    With the eigenvector-restricted domain D, R_K - R_F is the projector onto
    D^perp, so `gap` is exactly 1 whenever D != H. `resolvent_gap` is the
    normalized Frobenius norm sqrt(codim D / dim) and tracks how much of the
    boundary space lies outside the domain.
    """
    rows = []
    for trunc in truncations:
        surf = build_surface(name, trunc, quad_factor)
        result = fk_extensions(surf, z, threshold=threshold)
        rows.append({
            'truncation': trunc,
            'dim': surf.dim,
            'domain_dim': result.domain_dim,
            'gap': result.gap,
            'resolvent_gap': result.resolvent_gap,
            'ordering_margin': result.ordering_margin,
        })
    return pd.DataFrame(rows)
