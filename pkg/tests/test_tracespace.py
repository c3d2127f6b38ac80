import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.stats import ortho_group

from tracespace import (CURL, GRAD, HARMONIC, UPI_INV, UPI_SHARP, UPI_SHARP_INV, QuadratureError, SurfaceError,
                        TangentialField, apply_upi, biorthogonality_residual, build_surface, gamma_norm,
                        gram_residual, hodge_basis, laplace_de_rham, n_cross, n_cross_residual, pi_norm, riesz_bases,
                        s_gamma, trace_weights)


@pytest.fixture(scope='module')
def sphere():
    return build_surface('sphere', 4)


@pytest.fixture(scope='module')
def torus():
    return build_surface('flat_torus', 2)


def _field(surf, rng):
    return TangentialField(surf, rng.standard_normal(surf.dim) + 1j * rng.standard_normal(surf.dim))


def test_mode_counts(sphere, torus):
    # l = 1..4 gives 24 scalar modes, each with a grad and a curl field
    assert sphere.info()['n_scalar_modes'] == 24
    assert sphere.dim == 48
    assert sphere.b1 == 0
    assert torus.b1 == 2
    assert torus.dim == 2 * torus.n_scalar + 2
    assert build_surface('sphere', 8).dim == 160


def test_disconnected_surfaces():
    spheres = build_surface('two_spheres', 2)
    tori = build_surface('two_tori', 1)
    assert spheres.b0 == 2 and spheres.b1 == 0
    assert tori.b0 == 2 and tori.b1 == 4
    assert gram_residual(spheres) <= 1e-9
    assert gram_residual(tori) <= 1e-9


def test_unknown_surface():
    with pytest.raises(SurfaceError):
        build_surface('klein_bottle', 3)
    with pytest.raises(SurfaceError):
        build_surface('sphere', 0)


@pytest.mark.parametrize('name,truncation', [('sphere', 6), ('flat_torus', 4), ('torus', 3)])
def test_gram_identity(name, truncation):
    assert gram_residual(build_surface(name, truncation)) <= 1e-9


def test_hodge_basis_families(torus):
    basis = hodge_basis(torus)
    families = [mode.family for mode in basis]
    assert families.count(GRAD) == families.count(CURL) == torus.n_scalar
    assert families.count(HARMONIC) == 2
    mode = basis[0]
    values = mode.evaluate(torus.points)
    assert_allclose(values, torus.field_table()[0], atol=1e-12)


def test_hodge_basis_rejects_poor_quadrature(sphere):
    with pytest.raises(QuadratureError):
        hodge_basis(sphere, tol=1e-300)


@pytest.mark.parametrize('route,tol', [('coefficients', 1e-12), ('quadrature', 1e-9)])
def test_biorthogonality(sphere, torus, route, tol):
    assert biorthogonality_residual(sphere, route) <= tol
    assert biorthogonality_residual(torus, route) <= tol


def test_trace_weights(sphere):
    s = trace_weights(sphere).s
    lam = sphere.lambdas
    g, _, c = sphere.blocks
    assert_allclose(s[g], lam ** -0.5)
    assert_allclose(s[c], lam ** 0.5)
    assert_allclose(np.diag(s_gamma(sphere)), 1.0 / s)


def test_riesz_bases(sphere, torus):
    for surf in (sphere, torus):
        bases = riesz_bases(surf)
        for k in range(surf.dim):
            assert pi_norm(TangentialField(surf, bases.pi[:, k])) == pytest.approx(1.0, rel=1e-12)
            assert gamma_norm(TangentialField(surf, bases.gamma[:, k])) == pytest.approx(1.0, rel=1e-12)
        assert_allclose(bases.pi.conj().T @ bases.gamma, np.eye(surf.dim), atol=1e-12)
    g, _, c = sphere.blocks
    pi = np.diag(riesz_bases(sphere).pi)
    assert_allclose(pi[g], sphere.lambdas ** 0.5)
    assert_allclose(pi[c], sphere.lambdas ** -0.5)


def test_upi_is_unitary(sphere, rng):
    for _ in range(10):
        field = _field(sphere, rng)
        norm = field.l2_norm()
        assert pi_norm(apply_upi(field, UPI_INV)) == pytest.approx(norm, rel=1e-12)
        assert gamma_norm(apply_upi(field, UPI_SHARP)) == pytest.approx(norm, rel=1e-12)
        back = apply_upi(apply_upi(field, UPI_SHARP), UPI_SHARP_INV)
        assert_allclose(back.coeffs, field.coeffs, atol=1e-12)


@pytest.mark.parametrize('fixture', ['sphere', 'torus'])
def test_n_cross_maps_pi_to_gamma(fixture, rng, request):
    surf = request.getfixturevalue(fixture)
    assert n_cross_residual(surf) <= 1e-9
    field = _field(surf, rng)
    assert gamma_norm(n_cross(field)) == pytest.approx(pi_norm(field), rel=1e-10)
    twice = n_cross(n_cross(field))
    assert_allclose(twice.coeffs, -field.coeffs, atol=1e-10)


def test_laplace_de_rham_kills_harmonic_fields(torus, rng):
    field = _field(torus, rng)
    out = laplace_de_rham(field)
    assert_allclose(out.block(HARMONIC), 0.0)
    assert_allclose(out.block(GRAD), -torus.lambdas ** 2 * field.block(GRAD))


def test_harmonic_rotation(torus, rng):
    rotation = ortho_group.rvs(2, random_state=rng)
    turned = torus.with_harmonic_rotation(rotation)
    assert gram_residual(turned) <= 1e-9
    with pytest.raises(SurfaceError):
        torus.with_harmonic_rotation(2 * np.eye(2))


def test_field_validation(sphere):
    with pytest.raises(SurfaceError):
        TangentialField(sphere, np.ones(sphere.dim + 1))
    with pytest.raises(SurfaceError):
        TangentialField(sphere, np.full(sphere.dim, np.nan))
