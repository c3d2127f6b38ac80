"""
Finite-dimensional linear relations in H (+) H.

A relation is stored as an orthonormal column basis of the subspace in
scaled coordinates sqrt(w) * raw, so that the weighted pivot inner product
(f|g) = sum w f conj(g) becomes the plain Euclidean one internally.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
from scipy.stats import unitary_group

from config import Config

logger = logging.getLogger(__name__)


class RelationError(ValueError):
    """Raised for malformed relations or violated preconditions"""


@dataclass(frozen=True)
class PivotSpace:
    dim: int
    weights: np.ndarray = None

    def __post_init__(self):
        if int(self.dim) < 1:
            raise RelationError(f"pivot space dimension must be >= 1, got {self.dim}")
        w = np.ones(self.dim) if self.weights is None else np.asarray(self.weights, dtype=float).ravel()
        if w.shape != (self.dim,):
            raise RelationError(f"expected {self.dim} weights, got {w.size}")
        if not np.all(w > 0):
            raise RelationError('pivot weights must be strictly positive')
        object.__setattr__(self, 'dim', int(self.dim))
        object.__setattr__(self, 'weights', w)

    @property
    def root(self):
        return np.sqrt(self.weights)

    @property
    def is_trivial(self):
        return bool(np.all(self.weights == 1.0))

    def inner(self, f, g):
        """Weighted inner product (f|g)"""
        return complex(np.sum(self.weights * np.asarray(f) * np.conj(g)))

    def norm(self, f):
        return float(np.sqrt(np.sum(self.weights * np.abs(f) ** 2)))

    def to_scaled(self, matrix):
        """Operator matrix in raw coordinates -> scaled coordinates"""
        r = self.root
        return (r[:, None] * np.asarray(matrix)) / r[None, :]

    def from_scaled(self, matrix):
        r = self.root
        return (np.asarray(matrix) / r[:, None]) * r[None, :]

    def __eq__(self, other):
        return isinstance(other, PivotSpace) and self.dim == other.dim and np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash((self.dim, self.weights.tobytes()))


def orthonormalize(columns, tol=None, scale=None):
    """Orthonormal basis of the column span (QR with pivoting).

    The rank cut is relative to the largest pivot, or to max(scale, pivot)
    when `scale` is given; blocks of an orthonormal basis pass scale=1 so a
    block of pure rounding noise has rank 0.
    """
    tol = Config.RANK_TOL if tol is None else tol
    columns = np.asarray(columns, dtype=complex)
    if columns.ndim != 2:
        raise RelationError('expected a 2-D array of column vectors')
    if columns.shape[1] == 0:
        return np.zeros((columns.shape[0], 0), dtype=complex)
    q, r, _ = la.qr(columns, mode='economic', pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0.0:
        return np.zeros((columns.shape[0], 0), dtype=complex)
    reference = diag[0] if scale is None else max(scale, diag[0])
    rank = int(np.sum(diag > tol * reference))
    return q[:, :rank]


def kernel(matrix, tol=None, scale=1.0):
    """Orthonormal basis of the null space, singular values cut at tol * max(scale, sigma_max)"""
    tol = Config.RANK_TOL if tol is None else tol
    matrix = np.atleast_2d(np.asarray(matrix, dtype=complex))
    _, sigma, vh = la.svd(matrix, full_matrices=True)
    reference = max(scale, sigma[0]) if sigma.size else scale
    rank = int(np.sum(sigma > tol * reference))
    return vh[rank:].conj().T


def complement(basis, dim):
    """Orthonormal basis of the orthogonal complement of span(basis) in C^dim"""
    if basis.shape[1] == 0:
        return np.eye(dim, dtype=complex)
    if basis.shape[1] >= dim:
        return np.zeros((dim, 0), dtype=complex)
    return la.null_space(basis.conj().T, rcond=Config.RANK_TOL).astype(complex)


@dataclass(frozen=True, eq=False)
class LinearRelation:
    """Subspace of H (+) H; `basis` is a 2n x rank orthonormal matrix in scaled coordinates"""

    space: PivotSpace
    basis: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=complex)
        if b.ndim != 2 or b.shape[0] != 2 * self.space.dim:
            raise RelationError(
                f"relation basis must have {2 * self.space.dim} rows for dim={self.space.dim}, got shape {b.shape}")
        object.__setattr__(self, 'basis', b)

    # construction

    @classmethod
    def from_pairs(cls, space, f, fp, tol=None):
        """Span of pairs (f[:, k], fp[:, k]) given in raw coordinates"""
        f = np.atleast_2d(np.asarray(f, dtype=complex))
        fp = np.atleast_2d(np.asarray(fp, dtype=complex))
        if f.shape != fp.shape or f.shape[0] != space.dim:
            raise RelationError(f"pair blocks must both be {space.dim} x k, got {f.shape} and {fp.shape}")
        r = space.root[:, None]
        return cls.from_scaled(space, r * f, r * fp, tol=tol)

    @classmethod
    def from_scaled(cls, space, f, fp, tol=None):
        return cls(space, orthonormalize(np.vstack([f, fp]), tol=tol))

    @classmethod
    def graph(cls, matrix, space=None):
        matrix = np.atleast_2d(np.asarray(matrix, dtype=complex))
        space = space or PivotSpace(matrix.shape[0])
        return cls.from_pairs(space, np.eye(space.dim), matrix)

    @classmethod
    def multivalued(cls, space):
        """{0} x H"""
        n = space.dim
        return cls(space, np.vstack([np.zeros((n, n)), np.eye(n)]).astype(complex))

    @classmethod
    def trivial(cls, space):
        """{(0, 0)}"""
        return cls(space, np.zeros((2 * space.dim, 0), dtype=complex))

    # views

    @property
    def dim(self):
        return self.space.dim

    @property
    def rank(self):
        return self.basis.shape[1]

    @property
    def f(self):
        return self.basis[:self.dim]

    @property
    def fp(self):
        return self.basis[self.dim:]

    def raw_pairs(self):
        r = self.space.root[:, None]
        return self.f / r, self.fp / r

    @property
    def projector(self):
        return self.basis @ self.basis.conj().T

    def domain(self):
        return orthonormalize(self.f, scale=1.0)

    def multivalued_part(self):
        """Orthonormal basis of {f' : (0, f') in rel}"""
        if self.rank == 0:
            return np.zeros((self.dim, 0), dtype=complex)
        return orthonormalize(self.fp @ kernel(self.f), scale=1.0)

    def inverse(self):
        return LinearRelation(self.space, np.vstack([self.fp, self.f]))

    def rotated(self, factor):
        """{(f, factor * f')}; factor=-1j turns accretive into dissipative"""
        return LinearRelation(self.space, np.vstack([self.f, factor * self.fp]))

    def mapped(self, left, right):
        """{(left f, right f')} for invertible scaled-coordinate maps"""
        return LinearRelation.from_scaled(self.space, left @ self.f, right @ self.fp)

    def contains(self, other, tol=None):
        tol = Config.ROUNDTRIP_TOL * 100 if tol is None else tol
        if other.rank == 0:
            return True
        residual = other.basis - self.projector @ other.basis
        return float(np.linalg.norm(residual, 2)) <= tol

    def to_operator(self):
        """Raw-coordinate matrix when the relation is the graph of an everywhere defined operator"""
        if self.rank != self.dim or self.multivalued_part().shape[1] > 0:
            raise RelationError('relation is not the graph of an everywhere defined operator')
        return self.space.from_scaled(la.solve(self.f.T, self.fp.T).T)


def subspace_distance(a, b):
    """Largest principal-angle sine, ||P_a - P_b||_2; 1.0 when ranks differ"""
    if a.space.dim != b.space.dim:
        raise RelationError('relations live in different spaces')
    if a.rank != b.rank:
        return 1.0
    if a.rank == 0:
        return 0.0
    return float(min(1.0, np.linalg.norm(a.projector - b.projector, 2)))


@dataclass(frozen=True, eq=False)
class ContractionOp:
    """Contraction in raw coordinates; `domain` is a scaled orthonormal basis or None for the full space"""

    space: PivotSpace
    matrix: np.ndarray
    domain: np.ndarray = None
    tol: float = field(default=None, compare=False)

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.matrix, dtype=complex))
        if m.shape != (self.space.dim, self.space.dim):
            raise RelationError(f"contraction must be {self.space.dim}x{self.space.dim}, got {m.shape}")
        object.__setattr__(self, 'matrix', m)
        tol = Config.CONTRACTION_TOL if self.tol is None else self.tol
        if self.norm > 1 + tol:
            raise RelationError(f"operator norm {self.norm:.3e} exceeds 1 + {tol:g}")

    @classmethod
    def from_matrix(cls, matrix, space=None, tol=None):
        matrix = np.atleast_2d(np.asarray(matrix, dtype=complex))
        return cls(space or PivotSpace(matrix.shape[0]), matrix, tol=tol)

    @property
    def scaled(self):
        return self.space.to_scaled(self.matrix)

    @property
    def is_full(self):
        return self.domain is None or self.domain.shape[1] == self.space.dim

    @property
    def norm(self):
        k = self.scaled
        if self.domain is not None:
            if self.domain.shape[1] == 0:
                return 0.0
            k = k @ self.domain
        return float(la.svdvals(k)[0])

    def is_unitary(self, tol=None):
        tol = Config.CONTRACTION_TOL if tol is None else tol
        if not self.is_full:
            return False
        k = self.scaled
        return float(np.linalg.norm(k.conj().T @ k - np.eye(self.space.dim), 2)) <= tol


@dataclass(frozen=True)
class RelationVerdict:
    is_symmetric: bool
    is_nonnegative: bool
    is_dissipative: bool
    is_accretive: bool
    is_maximal_dissipative: bool
    is_selfadjoint: bool
    margin: float
    accretive_margin: float
    rank: int
    dim: int
    sampled_margin: float = None

    def to_dict(self):
        return {
            'is_symmetric': self.is_symmetric,
            'is_nonnegative': self.is_nonnegative,
            'is_dissipative': self.is_dissipative,
            'is_accretive': self.is_accretive,
            'is_maximal_dissipative': self.is_maximal_dissipative,
            'is_selfadjoint': self.is_selfadjoint,
            'margin': self.margin,
            'accretive_margin': self.accretive_margin,
            'rank': self.rank,
            'dim': self.dim,
            'sampled_margin': self.sampled_margin,
        }


def _forms(rel):
    """Re and Im parts of (f'|f) compressed to the orthonormal basis"""
    b = rel.f.conj().T @ rel.fp
    return (b + b.conj().T) / 2, (b - b.conj().T) / 2j


def classify_relation(rel, samples=0, tol=None, seed=None):
    """Exact numerical-cone classification; `samples` only adds an empirical margin"""
    if rel.basis.shape[0] != 2 * rel.space.dim:
        raise RelationError('relation basis does not match its pivot space')
    tol = Config.DISSIPATIVE_TOL if tol is None else tol
    n, r = rel.dim, rel.rank
    if r == 0:
        return RelationVerdict(True, True, True, True, n == 0, False, 0.0, 0.0, 0, n,
                               0.0 if samples else None)

    re_form, im_form = _forms(rel)
    im_eigs = la.eigvalsh(im_form)
    re_eigs = la.eigvalsh(re_form)
    margin = float(-im_eigs[-1])
    accretive_margin = float(re_eigs[0])

    symmetric = bool(np.max(np.abs(im_eigs)) <= tol)
    dissipative = margin >= -tol
    verdict = RelationVerdict(
        is_symmetric=symmetric,
        is_nonnegative=symmetric and accretive_margin >= -tol,
        is_dissipative=dissipative,
        is_accretive=accretive_margin >= -tol,
        is_maximal_dissipative=dissipative and r == n,
        is_selfadjoint=symmetric and r == n,
        margin=margin,
        accretive_margin=accretive_margin,
        rank=r,
        dim=n,
        sampled_margin=_sampled_margin(rel, samples, seed) if samples else None,
    )
    logger.debug('classified relation rank=%d dim=%d margin=%.3e', r, n, margin)
    return verdict


def _sampled_margin(rel, samples, seed):
    rng = np.random.default_rng(Config.DEFAULT_SEED if seed is None else seed)
    coeffs = rng.standard_normal((rel.rank, samples)) + 1j * rng.standard_normal((rel.rank, samples))
    h = rel.basis @ coeffs
    f, fp = h[:rel.dim], h[rel.dim:]
    values = np.imag(np.sum(fp * f.conj(), axis=0)) / np.sum(np.abs(h) ** 2, axis=0)
    return float(-values.max())


def adjoint_relation(rel):
    """{(g, g') : (f'|g) = (f|g') for all (f, f') in rel}"""
    n = rel.dim
    if rel.rank == 0:
        return LinearRelation(rel.space, np.eye(2 * n, dtype=complex))
    constraint = np.hstack([rel.fp.conj().T, -rel.f.conj().T])
    null = la.null_space(constraint, rcond=Config.RANK_TOL)
    return LinearRelation(rel.space, orthonormalize(null))


def cayley(rel, tol=None):
    """Contraction h' - ih -> h' + ih on dom = {h' - ih}"""
    verdict = classify_relation(rel, tol=tol)
    if not verdict.is_dissipative:
        raise RelationError(f"Cayley transform needs a dissipative relation (margin {verdict.margin:.3e})")
    n = rel.dim
    if rel.rank == 0:
        return ContractionOp(rel.space, np.zeros((n, n)), domain=np.zeros((n, 0), dtype=complex))
    u = rel.fp - 1j * rel.f
    v = rel.fp + 1j * rel.f
    q, r = la.qr(u, mode='economic')
    scaled = v @ la.solve_triangular(r, q.conj().T)
    domain = None if rel.rank == n else q
    return ContractionOp(rel.space, rel.space.from_scaled(scaled), domain=domain)


def inverse_cayley(contraction):
    """{((K - I) f, i (K + I) f)}, always maximal dissipative"""
    if not contraction.is_full:
        raise RelationError('inverse Cayley transform needs an everywhere defined contraction')
    k = contraction.scaled
    eye = np.eye(contraction.space.dim)
    return LinearRelation.from_scaled(contraction.space, k - eye, 1j * (k + eye))


def _require_nonnegative(rel, what):
    verdict = classify_relation(rel)
    if not verdict.is_nonnegative:
        raise RelationError(f"{what} extension needs a symmetric nonnegative relation")
    return verdict


def friedrichs(rel):
    """Gr(P_D A on D) (+) ({0} x D^perp), D the domain of rel"""
    _require_nonnegative(rel, 'Friedrichs')
    n = rel.dim
    dom = rel.domain()
    perp = complement(dom, n)
    if dom.shape[1] == 0:
        return LinearRelation.multivalued(rel.space)
    coupling = dom.conj().T @ rel.f
    compressed = dom.conj().T @ rel.fp @ la.pinv(coupling, atol=Config.RANK_TOL)
    compressed = (compressed + compressed.conj().T) / 2
    f = np.hstack([dom, np.zeros((n, perp.shape[1]))])
    fp = np.hstack([dom @ compressed, perp])
    return LinearRelation.from_scaled(rel.space, f, fp)


def krein(rel):
    """((rel^-1)_F)^-1"""
    _require_nonnegative(rel, 'Krein-von Neumann')
    return friedrichs(rel.inverse()).inverse()


def resolvent_of_relation(rel, scaled=False):
    """(rel + I)^-1 for a selfadjoint nonnegative relation"""
    verdict = classify_relation(rel)
    if not (verdict.is_selfadjoint and verdict.is_nonnegative):
        raise RelationError('resolvent needs a selfadjoint nonnegative relation')
    r = rel.f @ la.pinv(rel.f + rel.fp)
    r = (r + r.conj().T) / 2
    return r if scaled else rel.space.from_scaled(r)


def resolvent_order_margin(lower, upper):
    """eigmin(R_upper - R_lower); >= -tol means lower <= upper in PSD order"""
    gap = resolvent_of_relation(upper, scaled=True) - resolvent_of_relation(lower, scaled=True)
    return float(la.eigvalsh((gap + gap.conj().T) / 2)[0])


# random instances

def random_contraction(dim, rng, unitary=False):
    """U diag(sigma) V^H with sigma in [0, 1]"""
    u = unitary_group.rvs(dim, random_state=rng) if dim > 1 else np.exp(2j * np.pi * rng.random()) * np.ones((1, 1))
    if unitary:
        return ContractionOp.from_matrix(u)
    v = unitary_group.rvs(dim, random_state=rng) if dim > 1 else np.ones((1, 1))
    sigma = rng.random(dim)
    return ContractionOp.from_matrix((u * sigma) @ v.conj().T)


def _random_orthonormal(n, k, rng):
    if k == 0:
        return np.zeros((n, 0), dtype=complex)
    z = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
    return la.qr(z, mode='economic')[0]


def random_nonnegative_relation(dim, rng, space=None):
    """span{(U a, U C a + N B a)} + {0} x M with D = ran U a proper subspace, N and M inside D^perp"""
    space = space or PivotSpace(dim)
    d = int(rng.integers(0, dim))
    basis = _random_orthonormal(dim, dim, rng)
    u, perp = basis[:, :d], basis[:, d:]
    rank_c = int(rng.integers(0, d + 1))
    g = rng.standard_normal((d, rank_c)) + 1j * rng.standard_normal((d, rank_c))
    c = g @ g.conj().T
    spare = dim - d
    n_cols = int(rng.integers(0, spare + 1))
    n_part = perp[:, :n_cols] @ (rng.standard_normal((n_cols, d)) + 1j * rng.standard_normal((n_cols, d)))
    m_part = perp[:, :int(rng.integers(0, spare + 1))]
    f = np.hstack([u, np.zeros((dim, m_part.shape[1]))])
    fp = np.hstack([u @ c + n_part, m_part])
    return LinearRelation.from_scaled(space, f, fp)


def _unitary_power(w, t):
    """w^t on the principal branch, angle -pi folded onto +pi"""
    t_form, z = la.schur(w, output='complex')
    eig = np.diag(t_form)
    angle = np.angle(eig)
    angle[angle <= -np.pi + 1e-9] = np.pi
    return (z * np.exp(1j * t * angle)) @ z.conj().T


def sample_nonnegative_extensions(rel, count, rng, max_attempts=None):
    """Selfadjoint nonnegative extensions of rel from unitary extensions of its Cayley isometry.

    F and K are always the first two entries; the rest come from the geodesic
    W_F (W_F^H W_K)^t and from Haar-random unitaries on the deficiency space,
    filtered for nonnegativity.
    """
    _require_nonnegative(rel, 'sampled')
    f_ext, k_ext = friedrichs(rel), krein(rel)
    extensions = [f_ext, k_ext]
    n = rel.dim
    isometry = cayley(rel)
    dom = np.eye(n, dtype=complex) if isometry.domain is None else isometry.domain
    image = isometry.scaled @ dom
    dom_perp, image_perp = complement(dom, n), complement(orthonormalize(image), n)
    if dom_perp.shape[1] == 0:
        return extensions

    w_f, w_k = cayley(f_ext).scaled, cayley(k_ext).scaled
    ts = np.linspace(0.0, 1.0, count + 2)[1:-1]
    candidates = [w_f @ _unitary_power(w_f.conj().T @ w_k, t) for t in ts]

    attempts = 0
    max_attempts = max_attempts or 50 * max(count, 1)
    k = dom_perp.shape[1]
    while len(candidates) < 2 * count and attempts < max_attempts:
        attempts += 1
        x = unitary_group.rvs(k, random_state=rng) if k > 1 else np.exp(2j * np.pi * rng.random()) * np.ones((1, 1))
        candidates.append(image @ dom.conj().T + image_perp @ x @ dom_perp.conj().T)

    for w in candidates:
        if len(extensions) >= count + 2:
            break
        contraction = ContractionOp(rel.space, rel.space.from_scaled(w), tol=1e-8)
        ext = inverse_cayley(contraction)
        if classify_relation(ext).is_nonnegative:
            extensions.append(ext)
    logger.debug('sampled %d nonnegative extensions from %d candidates', len(extensions) - 2, len(candidates))
    return extensions
