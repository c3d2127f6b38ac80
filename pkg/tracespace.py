"""
Spectral model surfaces and their tangential Hodge bases.

Coefficient vectors of tangential fields are ordered as
[grad block | harmonic block | curl block]; grad and curl blocks follow the
scalar modes sorted by (lambda, component, label).
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, lpmv

from config import Config
from morder import MOrderWeights

logger = logging.getLogger(__name__)

GRAD = 'grad'
HARMONIC = 'harmonic'
CURL = 'curl'

SURFACES = ('sphere', 'flat_torus', 'two_spheres', 'two_tori')
ALIASES = {'torus': 'flat_torus'}

UPI = 'upi'
UPI_INV = 'upi-inv'
UPI_SHARP = 'upi-sharp'
UPI_SHARP_INV = 'upi-sharp-inv'
DIRECTIONS = (UPI, UPI_INV, UPI_SHARP, UPI_SHARP_INV)


class SurfaceError(ValueError):
    """Unknown surface or unusable truncation"""


class QuadratureError(SurfaceError):
    """Surface quadrature does not resolve the truncated basis"""


class SphereChart:
    """Unit sphere with real spherical harmonics (no Condon-Shortley phase)"""

    kind = 'sphere'
    b1 = 0

    def __init__(self, lmax, quad_factor, center=(0.0, 0.0, 0.0)):
        if lmax < 1:
            raise SurfaceError(f"sphere needs lmax >= 1, got {lmax}")
        self.lmax = lmax
        self.center = np.asarray(center, dtype=float)
        self.n_theta = quad_factor * (lmax + 1)
        self.n_phi = 2 * self.n_theta + 1

    def quadrature(self):
        x, wx = np.polynomial.legendre.leggauss(self.n_theta)
        phi = 2 * np.pi * np.arange(self.n_phi) / self.n_phi
        theta = np.arccos(x)
        theta, phi = [a.ravel() for a in np.meshgrid(theta, phi, indexing='ij')]
        weights = np.repeat(wx, self.n_phi) * (2 * np.pi / self.n_phi)
        local = {'theta': theta, 'phi': phi}
        return local, self.position(local), weights

    def position(self, local):
        t, p = local['theta'], local['phi']
        return np.stack([np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)], axis=1) + self.center

    def local_coords(self, points):
        p = np.asarray(points, dtype=float) - self.center
        r = np.linalg.norm(p, axis=1)
        return {'theta': np.arccos(np.clip(p[:, 2] / r, -1, 1)), 'phi': np.arctan2(p[:, 1], p[:, 0])}

    def normal(self, local):
        return self.position(local) - self.center

    def modes(self):
        for l in range(1, self.lmax + 1):
            for m in range(-l, l + 1):
                yield np.sqrt(l * (l + 1)), f'l{l}m{m:+d}', (l, m)

    @staticmethod
    def _legendre(l, m, x):
        if m > l:
            return np.zeros_like(x)
        return (-1) ** m * lpmv(m, l, x)

    @staticmethod
    def _norm(l, m):
        return np.sqrt((2 * l + 1) / (4 * np.pi) * np.exp(gammaln(l - m + 1) - gammaln(l + m + 1)))

    def _angular(self, m, phi):
        if m > 0:
            return np.sqrt(2) * np.cos(m * phi), -m * np.sqrt(2) * np.sin(m * phi)
        if m < 0:
            return np.sqrt(2) * np.sin(-m * phi), -m * np.sqrt(2) * np.cos(-m * phi)
        return np.ones_like(phi), np.zeros_like(phi)

    def scalar(self, key, local):
        l, m = key
        a, _ = self._angular(m, local['phi'])
        return self._norm(l, abs(m)) * self._legendre(l, abs(m), np.cos(local['theta'])) * a

    def gradient(self, key, local):
        l, m = key
        am = abs(m)
        theta, phi = local['theta'], local['phi']
        x, sin_t = np.cos(theta), np.sin(theta)
        p_lm = self._legendre(l, am, x)
        d_theta = (l * x * p_lm - (l + am) * self._legendre(l - 1, am, x)) / sin_t
        a, da = self._angular(m, phi)
        nrm = self._norm(l, am)
        g_theta = nrm * d_theta * a
        g_phi = nrm * p_lm * da / sin_t
        e_theta = np.stack([x * np.cos(phi), x * np.sin(phi), -sin_t], axis=1)
        e_phi = np.stack([-np.sin(phi), np.cos(phi), np.zeros_like(phi)], axis=1)
        return g_theta[:, None] * e_theta + g_phi[:, None] * e_phi

    def harmonic(self, index, local):
        raise SurfaceError('the sphere carries no harmonic fields')

    def profile(self, local):
        return np.cos(local['theta'])

    def cap_distance(self, local):
        """Geodesic distance to the north pole"""
        return local['theta']


class TorusChart:
    """Flat torus [0, 2pi)^2 with trigonometric modes"""

    kind = 'flat_torus'
    b1 = 2

    def __init__(self, kmax, quad_factor, center=(0.0, 0.0, 0.0)):
        if kmax < 1:
            raise SurfaceError(f"flat torus needs kmax >= 1, got {kmax}")
        self.kmax = kmax
        self.center = np.asarray(center, dtype=float)
        self.n_grid = 2 * quad_factor * (kmax + 1)

    def quadrature(self):
        g = 2 * np.pi * np.arange(self.n_grid) / self.n_grid
        x, y = [a.ravel() for a in np.meshgrid(g, g, indexing='ij')]
        local = {'x': x, 'y': y}
        weights = np.full(x.size, (2 * np.pi / self.n_grid) ** 2)
        return local, self.position(local), weights

    def position(self, local):
        return np.stack([local['x'], local['y'], np.zeros_like(local['x'])], axis=1) + self.center

    def local_coords(self, points):
        p = np.asarray(points, dtype=float) - self.center
        return {'x': np.mod(p[:, 0], 2 * np.pi), 'y': np.mod(p[:, 1], 2 * np.pi)}

    def normal(self, local):
        n = np.zeros((local['x'].size, 3))
        n[:, 2] = 1.0
        return n

    def modes(self):
        k = self.kmax
        for m in range(0, k + 1):
            for n in range(-k, k + 1):
                if m * m + n * n > k * k or not (m > 0 or (m == 0 and n > 0)):
                    continue
                lam = np.sqrt(m * m + n * n)
                yield lam, f'cos{m},{n:+d}', ('cos', m, n)
                yield lam, f'sin{m},{n:+d}', ('sin', m, n)

    def scalar(self, key, local):
        kind, m, n = key
        arg = m * local['x'] + n * local['y']
        return (np.cos(arg) if kind == 'cos' else np.sin(arg)) / (np.pi * np.sqrt(2))

    def gradient(self, key, local):
        kind, m, n = key
        arg = m * local['x'] + n * local['y']
        d = (-np.sin(arg) if kind == 'cos' else np.cos(arg)) / (np.pi * np.sqrt(2))
        return d[:, None] * np.array([m, n, 0.0])[None, :]

    def harmonic(self, index, local):
        out = np.zeros((local['x'].size, 3))
        out[:, index] = 1.0 / (2 * np.pi)
        return out

    def profile(self, local):
        return np.cos(local['x'])

    def cap_distance(self, local):
        """Periodic distance to the point (pi, pi)"""
        dx = np.abs(local['x'] - np.pi)
        dy = np.abs(local['y'] - np.pi)
        dx = np.minimum(dx, 2 * np.pi - dx)
        dy = np.minimum(dy, 2 * np.pi - dy)
        return np.hypot(dx, dy)


@dataclass(frozen=True, eq=False)
class ScalarMode:
    lam: float
    component: int
    label: str
    key: tuple


@dataclass(frozen=True, eq=False)
class HodgeMode:
    family: str
    index: int
    lam: float
    label: str
    component: int
    surface: object

    def evaluate(self, points):
        """Tangential field at points of this mode's component"""
        chart = self.surface.charts[self.component]
        local = chart.local_coords(points)
        if self.family == HARMONIC:
            return self.surface.harmonic_at(self.index, points)
        mode = self.surface.modes[self.index]
        grad = chart.gradient(mode.key, local) / mode.lam
        if self.family == GRAD:
            return grad
        return -np.cross(chart.normal(local), grad)


class SpectralSurface:
    """Disjoint union of spectral charts with a tensor quadrature on each"""

    def __init__(self, name, truncation, quad_factor=None, harmonic_rotation=None):
        name = ALIASES.get(name, name)
        if name not in SURFACES:
            raise SurfaceError(f"unknown surface '{name}' (choose from {', '.join(SURFACES)})")
        self.name = name
        self.truncation = int(truncation)
        self.quad_factor = int(quad_factor or Config.QUAD_FACTOR)
        if self.quad_factor < 1:
            raise SurfaceError('quad_factor must be >= 1')

        if name == 'sphere':
            self.charts = [SphereChart(self.truncation, self.quad_factor)]
        elif name == 'two_spheres':
            self.charts = [SphereChart(self.truncation, self.quad_factor),
                           SphereChart(self.truncation, self.quad_factor, center=(3.0, 0.0, 0.0))]
        elif name == 'flat_torus':
            self.charts = [TorusChart(self.truncation, self.quad_factor)]
        else:
            self.charts = [TorusChart(self.truncation, self.quad_factor),
                           TorusChart(self.truncation, self.quad_factor, center=(0.0, 0.0, 3.0))]
        self.b0 = len(self.charts)
        self.b1 = sum(c.b1 for c in self.charts)

        self._build_nodes()
        self.modes = sorted(
            (ScalarMode(lam, comp, label, key)
             for comp, chart in enumerate(self.charts) for lam, label, key in chart.modes()),
            key=lambda mode: (round(mode.lam, 12), mode.component, mode.label))
        self.harmonic_labels = [(comp, idx) for comp, chart in enumerate(self.charts) for idx in range(chart.b1)]
        rotation = np.eye(self.b1) if harmonic_rotation is None else np.asarray(harmonic_rotation, dtype=float)
        if rotation.shape != (self.b1, self.b1):
            raise SurfaceError(f"harmonic rotation must be {self.b1}x{self.b1}")
        if self.b1 and np.linalg.norm(rotation.T @ rotation - np.eye(self.b1)) > 1e-10:
            raise SurfaceError('harmonic rotation must be orthogonal')
        self.harmonic_rotation = rotation
        self._table = None
        logger.debug('built %s truncation=%d with %d scalar modes on %d nodes',
                     name, self.truncation, len(self.modes), self.weights.size)

    def _build_nodes(self):
        locals_, points, weights, components = [], [], [], []
        for comp, chart in enumerate(self.charts):
            local, pts, w = chart.quadrature()
            locals_.append(local)
            points.append(pts)
            weights.append(w)
            components.append(np.full(w.size, comp))
        self.local = locals_
        self.points = np.vstack(points)
        self.weights = np.concatenate(weights)
        self.component = np.concatenate(components)
        self.normals = np.vstack([c.normal(loc) for c, loc in zip(self.charts, locals_)])

    def with_harmonic_rotation(self, rotation):
        """Same surface with the harmonic frame h'_a = sum_b rotation[b, a] h_b"""
        return SpectralSurface(self.name, self.truncation, self.quad_factor,
                               harmonic_rotation=self.harmonic_rotation @ np.asarray(rotation, dtype=float))

    # sizes

    @property
    def n_scalar(self):
        return len(self.modes)

    @property
    def dim(self):
        return 2 * self.n_scalar + self.b1

    @property
    def blocks(self):
        g, h = self.n_scalar, self.b1
        return slice(0, g), slice(g, g + h), slice(g + h, 2 * g + h)

    @property
    def lambdas(self):
        return np.array([m.lam for m in self.modes])

    def families(self):
        return [GRAD] * self.n_scalar + [HARMONIC] * self.b1 + [CURL] * self.n_scalar

    def family_lambdas(self):
        """lambda per Hodge coefficient, 1 on the harmonic block"""
        lam = self.lambdas
        return np.concatenate([lam, np.ones(self.b1), lam])

    def labels(self):
        grad = [f'grad:{m.component}:{m.label}' for m in self.modes]
        harm = [f'harmonic:{c}:h{i}' for c, i in self.harmonic_labels]
        curl = [f'curl:{m.component}:{m.label}' for m in self.modes]
        return grad + harm + curl

    # node tables

    def _on_component(self, comp, values):
        full = np.zeros((self.weights.size,) + values.shape[1:])
        full[self.component == comp] = values
        return full

    def scalar_table(self):
        """(n_scalar, n_nodes) eigenfunction values"""
        return np.array([self._on_component(m.component, self.charts[m.component].scalar(m.key, self.local[m.component]))
                         for m in self.modes])

    def _frame_harmonics(self):
        base = [self._on_component(c, self.charts[c].harmonic(i, self.local[c])) for c, i in self.harmonic_labels]
        if not base:
            return np.zeros((0, self.weights.size, 3))
        return np.einsum('ba,bnc->anc', self.harmonic_rotation, np.array(base))

    def harmonic_at(self, index, points):
        points = np.asarray(points, dtype=float)
        out = np.zeros((points.shape[0], 3))
        for b, (c, i) in enumerate(self.harmonic_labels):
            out += self.harmonic_rotation[b, index] * self.charts[c].harmonic(i, self.charts[c].local_coords(points))
        return out

    def field_table(self):
        """(dim, n_nodes, 3) tangential Hodge fields at the quadrature nodes"""
        if self._table is None:
            grads = []
            for m in self.modes:
                chart = self.charts[m.component]
                grads.append(self._on_component(m.component, chart.gradient(m.key, self.local[m.component]) / m.lam))
            grads = np.array(grads).reshape(self.n_scalar, self.weights.size, 3)
            curls = -np.cross(self.normals[None, :, :], grads)
            self._table = np.concatenate([grads, self._frame_harmonics(), curls], axis=0)
        return self._table

    def integrate(self, values):
        return np.tensordot(values, self.weights, axes=([-1], [0]))

    def gram(self, table=None, other=None, density=None):
        """Quadrature matrix G_ab = int density v_b . conj(v_a)"""
        a = self.field_table() if table is None else table
        b = a if other is None else other
        w = self.weights if density is None else self.weights * density
        left = (np.conj(a) * w[None, :, None]).reshape(a.shape[0], -1)
        return left @ b.reshape(b.shape[0], -1).T

    def info(self):
        return {
            'surface': self.name,
            'truncation': self.truncation,
            'quad_factor': self.quad_factor,
            'b0': self.b0,
            'b1': self.b1,
            'n_scalar_modes': self.n_scalar,
            'n_tangential_modes': self.dim,
            'n_nodes': int(self.weights.size),
        }


@dataclass(frozen=True, eq=False)
class TangentialField:
    surface: SpectralSurface
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex).ravel()
        if c.size != self.surface.dim:
            raise SurfaceError(f"expected {self.surface.dim} Hodge coefficients, got {c.size}")
        if not np.all(np.isfinite(c)):
            raise SurfaceError('Hodge coefficients must be finite')
        object.__setattr__(self, 'coeffs', c)

    def block(self, family):
        g, h, c = self.surface.blocks
        return self.coeffs[{GRAD: g, HARMONIC: h, CURL: c}[family]]

    def values(self):
        """Field values at the quadrature nodes"""
        return np.einsum('a,anc->nc', self.coeffs, self.surface.field_table())

    def l2_norm(self):
        return float(np.linalg.norm(self.coeffs))


def build_surface(name, truncation, quad_factor=None):
    """Instantiate a model surface truncated at lmax (spheres) or kmax (tori)"""
    return SpectralSurface(name, truncation, quad_factor)


def gram_residual(surf):
    return float(np.max(np.abs(surf.gram() - np.eye(surf.dim))))


def hodge_basis(surf, tol=None):
    """
    Grad, harmonic and curl modes of the truncated tangential L2 space.

    Raises
    ------
    QuadratureError
        when the quadrature Gram matrix deviates from the identity by more than `tol`.
    """
    tol = Config.GRAM_TOL if tol is None else tol
    residual = gram_residual(surf)
    if residual > tol:
        raise QuadratureError(
            f"Gram residual {residual:.2e} exceeds {tol:g} on {surf.name}; increase quad_factor")
    basis = [HodgeMode(GRAD, j, m.lam, m.label, m.component, surf) for j, m in enumerate(surf.modes)]
    basis += [HodgeMode(HARMONIC, b, 1.0, f'h{i}', c, surf) for b, (c, i) in enumerate(surf.harmonic_labels)]
    basis += [HodgeMode(CURL, j, m.lam, m.label, m.component, surf) for j, m in enumerate(surf.modes)]
    return basis


def trace_weights(surf):
    """s = lambda^{-1/2} (grad), 1 (harmonic), lambda^{1/2} (curl): ||.||_pi = ||s.||, ||.||_gamma = ||./s||"""
    lam = surf.lambdas
    return MOrderWeights(np.concatenate([lam ** -0.5, np.ones(surf.b1), lam ** 0.5]))


@dataclass(frozen=True, eq=False)
class RieszBases:
    pi: np.ndarray
    gamma: np.ndarray


def riesz_bases(surf):
    """Columns are Hodge coefficients of the pi- and gamma-orthonormal bases"""
    s = trace_weights(surf).s
    return RieszBases(np.diag(1.0 / s), np.diag(s))


def biorthogonality_residual(surf, route='coefficients'):
    bases = riesz_bases(surf)
    if route == 'coefficients':
        cross = bases.pi.conj().T @ bases.gamma
    elif route == 'quadrature':
        table = surf.field_table()
        pi_fields = np.tensordot(bases.pi, table, axes=([0], [0]))
        gamma_fields = np.tensordot(bases.gamma, table, axes=([0], [0]))
        cross = surf.gram(pi_fields, gamma_fields)
    else:
        raise SurfaceError(f"unknown route '{route}'")
    return float(np.max(np.abs(cross - np.eye(surf.dim))))


def pi_norm(field):
    return float(np.linalg.norm(trace_weights(field.surface).s * field.coeffs))


def gamma_norm(field):
    return float(np.linalg.norm(field.coeffs / trace_weights(field.surface).s))


def upi_diagonal(surf, direction):
    s = trace_weights(surf).s
    if direction in (UPI, UPI_SHARP):
        return s
    if direction in (UPI_INV, UPI_SHARP_INV):
        return 1.0 / s
    raise SurfaceError(f"unknown direction '{direction}' (choose from {', '.join(DIRECTIONS)})")


def apply_upi(field, direction):
    return TangentialField(field.surface, upi_diagonal(field.surface, direction) * field.coeffs)


def s_gamma(surf):
    """S_gamma = diag(1/s): lambda^{1/2} on grad, 1 on harmonic, lambda^{-1/2} on curl"""
    return np.diag(1.0 / trace_weights(surf).s)


def n_cross_matrix(surf):
    """Hodge-coefficient matrix of x -> n(x) x v(x)"""
    g, h, c = surf.blocks
    out = np.zeros((surf.dim, surf.dim))
    k = surf.n_scalar
    out[c, g] = -np.eye(k)
    out[g, c] = np.eye(k)
    if surf.b1:
        table = surf.field_table()[h]
        rotated = np.cross(surf.normals[None, :, :], table)
        out[h, h] = np.real(surf.gram(table, rotated))
    return out


def n_cross(field):
    return TangentialField(field.surface, n_cross_matrix(field.surface) @ field.coeffs)


def n_cross_residual(surf):
    """max |n x v_a - sum_b N_ba v_b| over nodes and modes"""
    table = surf.field_table()
    direct = np.cross(surf.normals[None, :, :], table)
    predicted = np.einsum('ba,bnc->anc', n_cross_matrix(surf), table)
    return float(np.max(np.abs(direct - predicted)))


def laplace_de_rham(field):
    """-lambda^2 on grad/curl coefficients, 0 on harmonic"""
    surf = field.surface
    factor = -surf.family_lambdas() ** 2
    factor[surf.blocks[1]] = 0.0
    return TangentialField(surf, factor * field.coeffs)
