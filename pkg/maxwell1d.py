"""
1-D Maxwell testbed on [0, 1].

M(E, H) = (eps^-1 H', -mu^-1 E') with boundary maps
Gamma0 = (H(0), H(1)) and Gamma1 = (E(0), -E(1)); boundary conditions are
(K + I) Gamma0 + i (K - I) Gamma1 = 0 for a 2x2 contraction K, or the
impedance form E(0) = -i z0 H(0), E(1) = i z1 H(1), i.e. K = (Z - I)(Z + I)^-1.
"""

import logging
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import pandas as pd
import scipy.linalg as la
from scipy import sparse
from scipy.sparse import linalg as splinalg

from config import Config
from linrel import ContractionOp, RelationError
from utils import complex_to_json, parse_params

logger = logging.getLogger(__name__)


class Maxwell1DError(ValueError):
    """Invalid model, boundary data or numerical failure in the 1-D testbed"""


@dataclass(frozen=True)
class Profile:
    """Piecewise constant positive coefficient: values[k] on [breaks[k-1], breaks[k])"""

    values: tuple
    breaks: tuple = ()

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        breaks = tuple(float(b) for b in self.breaks)
        if len(values) != len(breaks) + 1:
            raise Maxwell1DError('a profile needs exactly one more value than breakpoints')
        if any(v <= 0 for v in values):
            raise Maxwell1DError('material coefficients must be positive')
        if any(not 0 < b < 1 for b in breaks) or list(breaks) != sorted(breaks):
            raise Maxwell1DError('breakpoints must be increasing and inside (0, 1)')
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'breaks', breaks)

    @classmethod
    def coerce(cls, value):
        if isinstance(value, Profile):
            return value
        if isinstance(value, str):
            return parse_profile(value)
        return cls((float(value),))

    @property
    def is_constant(self):
        return len(self.values) == 1

    def __call__(self, x):
        idx = np.searchsorted(np.asarray(self.breaks), np.asarray(x, dtype=float), side='right')
        return np.asarray(self.values)[idx]

    def pieces(self):
        edges = (0.0,) + self.breaks + (1.0,)
        return [(edges[k], edges[k + 1], self.values[k]) for k in range(len(self.values))]

    def to_dict(self):
        return {'values': list(self.values), 'breaks': list(self.breaks)}


def parse_profile(text):
    """'1.0' or '1.0,0.5:2.0' (value 1 on [0, 0.5), 2 on [0.5, 1])"""
    tokens = [t.strip() for t in str(text).split(',') if t.strip()]
    try:
        values, breaks = [float(tokens[0])], []
        for token in tokens[1:]:
            b, v = token.split(':')
            breaks.append(float(b))
            values.append(float(v))
    except (IndexError, ValueError):
        raise Maxwell1DError(f"cannot parse material profile '{text}'")
    return Profile(tuple(values), tuple(breaks))


@dataclass(frozen=True)
class Maxwell1DModel:
    eps: Profile = 1.0
    mu: Profile = 1.0

    def __post_init__(self):
        object.__setattr__(self, 'eps', Profile.coerce(self.eps))
        object.__setattr__(self, 'mu', Profile.coerce(self.mu))

    @property
    def rotation(self):
        """W = diag(-i, i); unitary with W* = -W"""
        return np.diag([-1j, 1j])

    def breakpoints(self):
        return sorted(set(self.eps.breaks) | set(self.mu.breaks))

    def segments(self):
        edges = [0.0] + self.breakpoints() + [1.0]
        return [(a, b, float(self.eps((a + b) / 2)), float(self.mu((a + b) / 2))) for a, b in zip(edges[:-1], edges[1:])]

    def to_dict(self):
        return {'eps': self.eps.to_dict(), 'mu': self.mu.to_dict()}


def contraction_from_impedance(z0, z1):
    z = np.array([z0, z1], dtype=complex)
    if np.min(z.real) < -Config.DISSIPATIVE_TOL:
        raise Maxwell1DError(f"impedances need Re z >= 0, got z0={z0}, z1={z1}")
    return ContractionOp.from_matrix(np.diag((z - 1) / (z + 1)))


def _as_contraction(bc):
    try:
        if isinstance(bc, ContractionOp):
            k = bc
        elif isinstance(bc, (tuple, list)) and len(bc) == 2 and np.ndim(bc[0]) == 0:
            k = contraction_from_impedance(*bc)
        else:
            k = ContractionOp.from_matrix(bc)
    except RelationError as e:
        raise Maxwell1DError(f"invalid boundary contraction: {e}")
    if k.matrix.shape != (2, 2):
        raise Maxwell1DError(f"boundary contraction must be 2x2, got {k.matrix.shape}")
    return k


# continuum Green identity

@dataclass(frozen=True)
class GreenCase:
    """Smooth test pair psi = (E, H), phi = (E, H) with analytic derivatives"""

    name: str
    psi: tuple
    dpsi: tuple
    phi: tuple
    dphi: tuple
    impedance: tuple = None


def _leontovich_case(z0=1.0, z1=0.5):
    h = lambda x: 1 + x + 1j * x ** 2
    dh = lambda x: 1 + 2j * x
    h0, h1 = h(0.0), h(1.0)
    e = lambda x: -1j * z0 * h0 * (1 - x) + 1j * z1 * h1 * x
    de = lambda x: (1j * z0 * h0 + 1j * z1 * h1) * np.ones_like(x)
    return GreenCase('leontovich', (e, h), (de, dh), (e, h), (de, dh), impedance=(z0, z1))


GREEN_CASES = {
    'trig1': GreenCase(
        'trig1',
        (lambda x: np.sin(np.pi * x), lambda x: np.cos(np.pi * x)),
        (lambda x: np.pi * np.cos(np.pi * x), lambda x: -np.pi * np.sin(np.pi * x)),
        (lambda x: x, lambda x: np.ones_like(x)),
        (lambda x: np.ones_like(x), lambda x: np.zeros_like(x))),
    'trig2': GreenCase(
        'trig2',
        (lambda x: np.exp(2j * np.pi * x), lambda x: np.cos(3 * x) + 1j * x ** 2),
        (lambda x: 2j * np.pi * np.exp(2j * np.pi * x), lambda x: -3 * np.sin(3 * x) + 2j * x),
        (lambda x: np.sin(2 * x) + 1j, lambda x: np.exp(-x)),
        (lambda x: 2 * np.cos(2 * x), lambda x: -np.exp(-x))),
    'interior': GreenCase(
        'interior',
        (lambda x: np.sin(np.pi * x) ** 2, lambda x: np.sin(2 * np.pi * x) ** 2),
        (lambda x: np.pi * np.sin(2 * np.pi * x), lambda x: 2 * np.pi * np.sin(4 * np.pi * x)),
        (lambda x: x ** 2 * (1 - x) ** 2, lambda x: np.sin(3 * np.pi * x)),
        (lambda x: 2 * x * (1 - x) * (1 - 2 * x), lambda x: 3 * np.pi * np.cos(3 * np.pi * x))),
    'leontovich': _leontovich_case(),
}


def _quadrature(model, order=48, splits=8):
    nodes, weights = [], []
    x, w = np.polynomial.legendre.leggauss(order)
    for a, b, _, _ in model.segments():
        edges = np.linspace(a, b, splits + 1)
        for lo, hi in zip(edges[:-1], edges[1:]):
            nodes.append((hi - lo) / 2 * x + (hi + lo) / 2)
            weights.append((hi - lo) / 2 * w)
    return np.concatenate(nodes), np.concatenate(weights)


def green_identity_report(model, case):
    """Both sides of (M psi|phi) - (psi|M phi) = <Gamma1 psi|Gamma0 phi> - <Gamma0 psi|Gamma1 phi>"""
    if isinstance(case, str):
        if case not in GREEN_CASES:
            raise Maxwell1DError(f"unknown Green test case '{case}' (choose from {', '.join(GREEN_CASES)})")
        case = GREEN_CASES[case]
    x, w = _quadrature(model)
    eps, mu = model.eps(x), model.mu(x)
    (e_psi, h_psi), (de_psi, dh_psi) = [[f(x) for f in pair] for pair in (case.psi, case.dpsi)]
    (e_phi, h_phi), (de_phi, dh_phi) = [[f(x) for f in pair] for pair in (case.phi, case.dphi)]

    def inner(e1, h1, e2, h2):
        return complex(np.sum(w * (eps * e1 * np.conj(e2) + mu * h1 * np.conj(h2))))

    lhs = (inner(dh_psi / eps, -de_psi / mu, e_phi, h_phi)
           - inner(e_psi, h_psi, dh_phi / eps, -de_phi / mu))

    def traces(pair):
        e, h = pair
        ends = np.array([0.0, 1.0])
        return h(ends), np.array([1.0, -1.0]) * e(ends)

    g0_psi, g1_psi = traces(case.psi)
    g0_phi, g1_phi = traces(case.phi)
    rhs = complex(np.vdot(g0_phi, g1_psi) - np.vdot(g1_phi, g0_psi))
    report = {'case': case.name, 'lhs': lhs, 'rhs': rhs, 'residual': abs(lhs - rhs)}
    if case.impedance is not None:
        z = np.asarray(case.impedance, dtype=complex)
        report['dissipation'] = lhs.imag / 2
        report['predicted_dissipation'] = float(-np.sum(z.real * np.abs(g0_psi) ** 2))
    return report


def green_identity_residual(model, case):
    return green_identity_report(model, case)['residual']


# summation-by-parts discretization

class SBPOperator:
    """Second-order diagonal-norm SBP first derivative D = P^-1 Q on n points of [0, 1]"""

    def __init__(self, n):
        if n < 3:
            raise Maxwell1DError('SBP operator needs at least 3 points')
        self.n = n
        self.h = 1.0 / (n - 1)
        self.x = np.linspace(0.0, 1.0, n)
        mid = sparse.diags([-0.5, 0.5], [-1, 1], shape=(n, n), format='lil')
        mid[0, 0], mid[-1, -1] = -0.5, 0.5
        self.Q = mid.toarray()
        p = np.full(n, self.h)
        p[0] = p[-1] = 0.5 * self.h
        self.p = p
        self.D = self.Q / p[:, None]


@dataclass(frozen=True, eq=False)
class DiscreteGenerator:
    model: Maxwell1DModel
    n: int
    contraction: ContractionOp
    x: np.ndarray
    weights: np.ndarray
    skew: np.ndarray
    form: np.ndarray
    matrix: np.ndarray
    g0: np.ndarray
    g1: np.ndarray

    @cached_property
    def scale(self):
        """||M_h||_2"""
        return _largest_singular_value(self.matrix)

    @cached_property
    def sparse_symmetrized(self):
        return sparse.csc_matrix(self.symmetrized())

    def inner(self, psi, phi):
        return complex(np.sum(self.weights * psi * np.conj(phi)))

    def energy(self, psi):
        return float(np.sum(self.weights * np.abs(psi) ** 2))

    def boundary_flux(self, psi):
        """(||u||^2 - ||K u||^2) / 2 with u = Gamma1 - i Gamma0; the energy loss rate"""
        u = (self.g1 - 1j * self.g0) @ psi
        return float((np.linalg.norm(u) ** 2 - np.linalg.norm(self.contraction.matrix @ u) ** 2) / 2)

    def symmetrized(self):
        """P^{1/2} M_h P^{-1/2}, the generator in Euclidean coordinates"""
        r = np.sqrt(self.weights)
        return (r[:, None] * self.matrix) / r[None, :]

    def eigenvalues(self):
        return la.eigvals(self.matrix)

    def is_dissipative(self, tol=None):
        tol = Config.DISSIPATIVE_TOL if tol is None else tol
        return float(np.max(self.eigenvalues().imag)) <= tol * self.scale

    def split(self, psi):
        return psi[:self.n], psi[self.n:]


def build_generator(model, bc, n):
    """
    SBP-SAT generator M_h in the weighted norm P_w = diag(eps P, mu P).

    The penalty -(i/4) P_w^-1 (Cv + K Cu)^H (Cv - K Cu), with u = Cu psi =
    Gamma1 - i Gamma0 and v = Cv psi = Gamma1 + i Gamma0, gives
    Im <M_h psi|psi> = (||K u||^2 - ||u||^2) / 4 exactly.
    """
    if int(n) < 16:
        raise Maxwell1DError(f"grid needs n >= 16 points, got {n}")
    k = _as_contraction(bc)
    sbp = SBPOperator(int(n))
    n = sbp.n
    eps, mu = model.eps(sbp.x), model.mu(sbp.x)
    weights = np.concatenate([eps * sbp.p, mu * sbp.p])

    zero = np.zeros((n, n))
    skew = np.block([[zero, sbp.Q], [-sbp.Q, zero]]).astype(complex)

    g0 = np.zeros((2, 2 * n), dtype=complex)
    g1 = np.zeros((2, 2 * n), dtype=complex)
    g0[0, n], g0[1, 2 * n - 1] = 1.0, 1.0
    g1[0, 0], g1[1, n - 1] = 1.0, -1.0
    cu, cv = g1 - 1j * g0, g1 + 1j * g0
    km = k.matrix
    form = skew - 0.25j * (cv + km @ cu).conj().T @ (cv - km @ cu)
    matrix = form / weights[:, None]
    logger.debug('built 1-D generator n=%d ||K||=%.3f', n, k.norm)
    return DiscreteGenerator(model, n, k, sbp.x, weights, skew, form, matrix, g0, g1)


def discrete_green_residual(gen, psi, phi, penalized=False):
    """|<A psi|phi> - <psi|A phi> - (<g1 psi|g0 phi> - <g0 psi|g1 phi>)| / (|psi| |phi|), A = SBP part or M_h"""
    f = gen.form if penalized else gen.skew
    lhs = np.vdot(phi, f @ psi) - np.conj(np.vdot(psi, f @ phi))
    rhs = np.vdot(gen.g0 @ phi, gen.g1 @ psi) - np.vdot(gen.g1 @ phi, gen.g0 @ psi)
    return float(abs(lhs - rhs) / (np.linalg.norm(psi) * np.linalg.norm(phi)))


def interior_field(gen, rng):
    """Random field vanishing at both endpoints"""
    psi = rng.standard_normal(2 * gen.n) + 1j * rng.standard_normal(2 * gen.n)
    for idx in (0, gen.n - 1, gen.n, 2 * gen.n - 1):
        psi[idx] = 0.0
    return psi


# resolvent and numerical range

def upper_half_plane_grid(count, re_max=20.0, im_min=1e-2, im_max=10.0):
    rows = max(1, int(np.sqrt(count)))
    cols = int(np.ceil(count / rows))
    re = np.linspace(-re_max, re_max, cols)
    im = np.logspace(np.log10(im_min), np.log10(im_max), rows)
    grid = (re[None, :] + 1j * im[:, None]).ravel()
    return grid[:count]


def _largest_singular_value(matrix):
    try:
        top = splinalg.svds(sparse.csr_matrix(matrix), k=1, tol=1e-12, v0=np.ones(min(matrix.shape)),
                            return_singular_vectors=False)
        return float(top[0])
    except (splinalg.ArpackError, ValueError):
        return float(la.svdvals(matrix)[0])


def resolvent_norm(a, lam):
    """||(a - lam)^-1||_2 for sparse a: one sparse LU, Lanczos on (a - lam)^-H (a - lam)^-1"""
    n = a.shape[0]
    shifted = (a - lam * sparse.identity(n, dtype=complex, format='csc')).tocsc()
    try:
        lu = splinalg.splu(shifted)
        gram = splinalg.LinearOperator((n, n), matvec=lambda v: lu.solve(lu.solve(v), trans='H'), dtype=complex)
        top = splinalg.eigsh(gram, k=1, which='LM', tol=1e-12, v0=np.ones(n, dtype=complex),
                             return_eigenvectors=False)
        return float(np.sqrt(top[0].real))
    except (RuntimeError, splinalg.ArpackError):
        logger.debug('sparse resolvent failed at lambda=%s, using a dense SVD', lam)
        smallest = la.svdvals(shifted.toarray())[-1]
        return float('inf') if smallest == 0 else float(1.0 / smallest)


def numerical_range_and_resolvent(gen, samples, tol=None):
    """max (Im lambda) ||(M_h - lambda)^-1|| over samples plus numerical-range diagnostics"""
    tol = Config.RESOLVENT_TOL if tol is None else tol
    samples = np.atleast_1d(np.asarray(samples, dtype=complex))
    if np.any(samples.imag <= 0):
        raise Maxwell1DError('resolvent samples must lie in the open upper half-plane')
    a = gen.sparse_symmetrized
    ratios = np.array([lam.imag * resolvent_norm(a, lam) for lam in samples])
    dense = gen.symmetrized()
    imag_part = (dense - dense.conj().T) / 2j
    worst = int(np.argmax(ratios))
    return {
        'samples': int(samples.size),
        'max_resolvent_ratio': float(ratios.max()),
        'worst_sample': [float(samples[worst].real), float(samples[worst].imag)],
        'resolvent_bound_holds': bool(ratios.max() <= 1 + tol),
        'numerical_range_sup': float(la.eigvalsh(imag_part)[-1]),
        'max_eigenvalue_imag': float(gen.eigenvalues().imag.max()),
        'scale': gen.scale,
    }


# Crank-Nicolson evolution

@dataclass
class EvolutionTrace:
    records: list = field(default_factory=list)
    state: np.ndarray = None

    def to_frame(self):
        return pd.DataFrame(self.records, columns=['step', 't', 'energy', 'boundary_flux'])

    @property
    def energies(self):
        return np.array([r['energy'] for r in self.records])

    def max_relative_increase(self):
        e = self.energies
        if e.size < 2:
            return 0.0
        base = np.where(e[:-1] > 0, e[:-1], 1.0)
        return float(np.max((e[1:] - e[:-1]) / base))

    def relative_drift(self):
        e = self.energies
        if e.size == 0 or e[0] == 0:
            return 0.0
        return float(np.max(np.abs(e - e[0])) / e[0])


def gaussian_pulse(gen, x0=0.5, w=0.05, direction='both'):
    """E = exp(-((x - x0)/w)^2); H = -i zeta E (right), +i zeta E (left) or 0"""
    e = np.exp(-((gen.x - x0) / w) ** 2).astype(complex)
    zeta = np.sqrt(gen.model.eps(gen.x) / gen.model.mu(gen.x))
    if direction == 'right':
        h = -1j * zeta * e
    elif direction == 'left':
        h = 1j * zeta * e
    elif direction == 'both':
        h = np.zeros_like(e)
    else:
        raise Maxwell1DError(f"unknown pulse direction '{direction}'")
    return np.concatenate([e, h])


def parse_pulse(gen, text):
    """gaussian:x0=0.5,w=0.05[,dir=right|left|both]"""
    kind, _, rest = str(text).partition(':')
    if kind != 'gaussian':
        raise Maxwell1DError(f"unknown pulse '{text}'")
    p = parse_params(rest)
    return gaussian_pulse(gen, float(p.get('x0', 0.5)), float(p.get('w', 0.05)), p.get('dir', 'both'))


def evolve_cn(gen, psi0, dt, steps):
    """(I + i dt/2 M_h) psi+ = (I - i dt/2 M_h) psi with one LU factorization"""
    if dt <= 0:
        raise Maxwell1DError(f"time step must be positive, got {dt}")
    psi = np.asarray(psi0, dtype=complex).copy()
    if psi.shape != (2 * gen.n,):
        raise Maxwell1DError(f"initial state must have {2 * gen.n} entries")
    eye = np.eye(2 * gen.n)
    lhs = eye + 0.5j * dt * gen.matrix
    rhs = eye - 0.5j * dt * gen.matrix
    with warnings.catch_warnings():
        warnings.simplefilter('error', la.LinAlgWarning)
        try:
            lu = la.lu_factor(lhs)
        except (la.LinAlgWarning, la.LinAlgError, ValueError) as e:
            raise Maxwell1DError(f"Crank-Nicolson factorization failed at dt={dt}: {e}")

    trace = EvolutionTrace()
    trace.records.append({'step': 0, 't': 0.0, 'energy': gen.energy(psi), 'boundary_flux': gen.boundary_flux(psi)})
    for step in range(1, steps + 1):
        psi = la.lu_solve(lu, rhs @ psi)
        trace.records.append({'step': step, 't': step * dt, 'energy': gen.energy(psi),
                              'boundary_flux': gen.boundary_flux(psi)})
    trace.state = psi
    return trace


# characteristic-equation oracle

def _transfer(model, lam, x):
    """Transfer matrices y(x) = T(x) y(0) for y = (E, H), evaluated at points x"""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros((x.size, 2, 2), dtype=complex)
    out[:] = np.eye(2)
    acc = np.eye(2, dtype=complex)
    for a, b, eps, mu in model.segments():
        kappa, zeta = lam * np.sqrt(eps * mu), np.sqrt(eps / mu)
        inside = (x >= a) & ((x < b) | (b == 1.0))
        d = x[inside] - a
        c, s = np.cos(kappa * d), np.sin(kappa * d)
        local = np.empty((d.size, 2, 2), dtype=complex)
        local[:, 0, 0], local[:, 0, 1] = c, -s / zeta
        local[:, 1, 0], local[:, 1, 1] = zeta * s, c
        out[inside] = local @ acc
        c, s = np.cos(kappa * (b - a)), np.sin(kappa * (b - a))
        acc = np.array([[c, -s / zeta], [zeta * s, c]]) @ acc
    return out


def _boundary_system(model, k, lam):
    t = _transfer(model, lam, [1.0])[0]
    a0 = np.array([[0, 1], t[1]])
    a1 = np.array([[1, 0], -t[0]])
    eye = np.eye(2)
    return (k + eye) @ a0 + 1j * (k - eye) @ a1


def characteristic_function(model, k, lam):
    return complex(np.linalg.det(_boundary_system(model, np.asarray(k, dtype=complex), lam)))


def _winding(f, corners, step):
    path = []
    for a, b in zip(corners, corners[1:] + corners[:1]):
        m = max(8, int(np.ceil(abs(b - a) / step)))
        path.append(a + (b - a) * np.arange(m) / m)
    path = np.concatenate(path + [corners[:1]])
    values = np.array([f(z) for z in path])
    if np.min(np.abs(values)) < 1e-12:
        return None
    dphase = np.angle(values[1:] / values[:-1])
    if np.max(np.abs(dphase)) > np.pi / 3 and step > 1e-4:
        return _winding(f, corners, step / 4)
    return int(round(np.sum(dphase) / (2 * np.pi)))


def _newton(f, z, tol=1e-13, maxiter=60):
    for _ in range(maxiter):
        h = 1e-6 * max(1.0, abs(z))
        dz = f(z) / ((f(z + h) - f(z - h)) / (2 * h))
        z = z - dz
        if abs(dz) < tol * max(1.0, abs(z)):
            break
    return z


def characteristic_roots(model, k, re_max=20.0, im_min=-5.0, im_max=0.5, step=0.05):
    """Roots of det[(K+I) A0(lambda) + i (K-I) A1(lambda)] in a box, by argument-principle bisection and Newton"""
    k = np.asarray(k.matrix if isinstance(k, ContractionOp) else k, dtype=complex)
    f = lambda z: characteristic_function(model, k, z)
    roots = []
    stack = [(-re_max - 0.0731, re_max + 0.0419, im_min - 0.0173, im_max + 0.0117, 0)]
    while stack:
        x0, x1, y0, y1, depth = stack.pop()
        corners = [complex(x0, y0), complex(x1, y0), complex(x1, y1), complex(x0, y1)]
        count = _winding(f, corners, step)
        if count is None:
            # a root sits on the contour: nudge the box
            stack.append((x0 - 1.3e-3, x1 + 0.7e-3, y0 - 1.1e-3, y1 + 0.9e-3, depth + 1))
            continue
        if count <= 0:
            continue
        small = max(x1 - x0, y1 - y0) < 0.25
        if (count == 1 and small) or depth > 60:
            z = _newton(f, complex((x0 + x1) / 2, (y0 + y1) / 2))
            if x0 - 0.1 <= z.real <= x1 + 0.1 and y0 - 0.1 <= z.imag <= y1 + 0.1:
                roots.append(z)
            continue
        if x1 - x0 >= y1 - y0:
            mid = x0 + 0.5137 * (x1 - x0)
            stack += [(x0, mid, y0, y1, depth + 1), (mid, x1, y0, y1, depth + 1)]
        else:
            mid = y0 + 0.4871 * (y1 - y0)
            stack += [(x0, x1, y0, mid, depth + 1), (x0, x1, mid, y1, depth + 1)]
    unique = []
    for z in sorted(roots, key=lambda z: (z.real, z.imag)):
        if not unique or abs(z - unique[-1]) > 1e-8 * max(1.0, abs(z)):
            unique.append(z)
    return np.array(unique, dtype=complex)


def exact_mode(model, k, lam, x):
    """Eigenfunction (E, H) at points x for a characteristic root lam"""
    system = _boundary_system(model, np.asarray(k, dtype=complex), lam)
    y0 = la.null_space(system, rcond=1e-6)
    if y0.shape[1] == 0:
        y0 = la.svd(system)[2].conj().T[:, -1:]
    y = _transfer(model, lam, x) @ y0[:, 0]
    return np.concatenate([y[:, 0], y[:, 1]])


SPECTRUM_COLUMNS = ['exact_re', 'exact_im', 'discrete_re', 'discrete_im', 'overlap', 'single_overlap', 'cluster',
                    'error', 'relative_error']


def discrete_eigenpairs(gen):
    """Eigenvalues of M_h and eigenvectors in Euclidean (P_w^1/2-scaled) coordinates, unit norm"""
    eigs, vecs = la.eig(gen.matrix)
    scaled = np.sqrt(gen.weights)[:, None] * vecs
    return eigs, scaled / np.linalg.norm(scaled, axis=0)[None, :]


def compare_spectrum(gen, roots, eigenpairs=None, cluster_tol=None):
    """
    Match each exact eigenvalue to the discrete eigenvector with the largest weighted overlap.

    The collocated central scheme has an odd-even twin k' = pi/h - k of every
    mode with the same discrete frequency sin(kh)/h, and eigenvectors of such
    a pair come out as arbitrary mixes. `overlap` is therefore taken against
    the span of every discrete eigenvector whose eigenvalue lies within
    cluster_tol * max(|lambda|, 1) of the matched one; `cluster` counts them.
    """
    cluster_tol = Config.SPECTRUM_TOL if cluster_tol is None else cluster_tol
    eigs, vecs = discrete_eigenpairs(gen) if eigenpairs is None else eigenpairs
    r = np.sqrt(gen.weights)
    rows = []
    for lam in roots:
        mode = r * exact_mode(gen.model, gen.contraction.matrix, lam, gen.x)
        mode = mode / np.linalg.norm(mode)
        single = np.abs(vecs.conj().T @ mode)
        j = int(np.argmax(single))
        members = np.flatnonzero(np.abs(eigs - eigs[j]) <= cluster_tol * max(abs(eigs[j]), 1.0))
        span = la.orth(vecs[:, members])
        rows.append({
            'exact_re': float(lam.real), 'exact_im': float(lam.imag),
            'discrete_re': float(eigs[j].real), 'discrete_im': float(eigs[j].imag),
            'overlap': float(min(1.0, np.linalg.norm(span.conj().T @ mode))),
            'single_overlap': float(single[j]),
            'cluster': int(members.size),
            'error': float(abs(eigs[j] - lam)),
            'relative_error': float(abs(eigs[j] - lam) / max(abs(lam), 1.0)),
        })
    return pd.DataFrame(rows, columns=SPECTRUM_COLUMNS)


def unmatched_eigenvalues(eigs, roots, re_max, im_min, cluster_tol=None):
    """Discrete eigenvalues inside the search box that sit near no exact root, sorted by real part"""
    cluster_tol = Config.SPECTRUM_TOL if cluster_tol is None else cluster_tol
    eigs = np.asarray(eigs, dtype=complex)
    roots = np.asarray(roots, dtype=complex)
    inside = eigs[(np.abs(eigs.real) <= re_max) & (eigs.imag >= im_min)]
    if roots.size:
        distance = np.min(np.abs(inside[:, None] - roots[None, :]), axis=1)
        inside = inside[distance > cluster_tol * np.maximum(np.abs(inside), 1.0)]
    return inside[np.lexsort((inside.imag, inside.real))]


def spectrum_report(gen, roots, re_max, im_min, eigenpairs=None):
    """Comparison table plus the twin and unmatched (spurious) discrete eigenvalues"""
    eigenpairs = discrete_eigenpairs(gen) if eigenpairs is None else eigenpairs
    table = compare_spectrum(gen, roots, eigenpairs)
    spurious = unmatched_eigenvalues(eigenpairs[0], roots, re_max, im_min)
    return table, {
        'twins': int((table['cluster'] - 1).clip(lower=0).sum()) if len(table) else 0,
        'unmatched': [complex_to_json(z) for z in spurious],
    }


def spectrum_convergence(model, bc, grids, roots, first=None):
    """Errors per root on successive grids and the observed order between the last two.

    `first` reuses an already computed comparison table for grids[0].
    """
    tables = [first if (i == 0 and first is not None) else compare_spectrum(build_generator(model, bc, n), roots)
              for i, n in enumerate(grids)]
    frame = pd.DataFrame({'exact_re': tables[0]['exact_re'], 'exact_im': tables[0]['exact_im']})
    for n, table in zip(grids, tables):
        frame[f'error_n{n}'] = table['error'].to_numpy()
    orders = []
    if len(grids) >= 2:
        (n1, t1), (n2, t2) = list(zip(grids, tables))[-2:]
        ratio = np.log((n2 - 1) / (n1 - 1))
        for e1, e2 in zip(t1['error'], t2['error']):
            orders.append(np.log(e1 / e2) / ratio if e1 > 1e-12 and e2 > 1e-13 else np.nan)
        frame['order'] = orders
    finite = [o for o in orders if np.isfinite(o)]
    return frame, (min(finite) if finite else float('nan'))
