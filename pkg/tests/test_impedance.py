import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.stats import ortho_group

from impedance import (ImpedanceError, assemble_condition, boundary_operator, cayley_kz, classify_condition,
                       classify_impedance, constant, convergence_table, f_dev, fk_extensions, fk_gap_trend,
                       frame_invariance, indicator, mulz_matrix, parse_impedance, pointwise, random_coefficients,
                       sample_random_impedance, sector)
from linrel import ContractionOp, random_contraction
from tracespace import build_surface


@pytest.fixture(scope='module')
def sphere():
    return build_surface('sphere', 4)


@pytest.fixture(scope='module')
def torus():
    return build_surface('flat_torus', 2)


@pytest.mark.parametrize('name,truncation', [('sphere', 6), ('flat_torus', 4)])
def test_mul_one_is_identity(name, truncation):
    surf = build_surface(name, truncation)
    assert np.max(np.abs(mulz_matrix(surf, constant(1.0)) - np.eye(surf.dim))) <= 1e-10


@pytest.mark.parametrize('alpha', [0.5, 1.0, 2.0])
def test_constant_impedance_cayley_closed_form(alpha):
    surf = build_surface('sphere', 6)
    k = cayley_kz(boundary_operator(surf, constant(alpha)))
    lam = surf.lambdas
    g, _, c = surf.blocks
    diag = np.diag(k.matrix)
    assert_allclose(diag[g], (alpha * lam - 1) / (alpha * lam + 1), atol=1e-12)
    assert_allclose(diag[c], (alpha / lam - 1) / (alpha / lam + 1), atol=1e-12)
    assert np.max(np.abs(k.matrix - np.diag(diag))) <= 1e-12


def test_parse_impedance():
    assert parse_impedance('const:2.5').params['alpha'] == 2.5
    assert parse_impedance('cap:theta0=0.4').kind == 'indicator'
    assert parse_impedance('sector:phi=0.3,r=2').params['r'] == 2.0
    assert parse_impedance('f-dev:1 + x').is_spectral
    spec = parse_impedance('random:s=1.5,seed=4')
    assert spec.params['seed'] == 4
    for bad in ('const:abc', 'cap:radius=1', 'sector:phi=2.0', 'random:s=0.3', 'magnetic:1'):
        with pytest.raises(ImpedanceError):
            parse_impedance(bad)


def test_spectral_impedance_is_diagonal(torus):
    z = f_dev('1 + x')
    g = mulz_matrix(torus, z)
    lam2 = torus.family_lambdas() ** 2
    lam2[torus.blocks[1]] = 0.0
    assert_allclose(g, np.diag(1 + lam2))
    with pytest.raises(ImpedanceError):
        mulz_matrix(torus, f_dev('-1 - x'))
    with pytest.raises(ImpedanceError, match='syntax error'):
        f_dev('1 +')


def test_negative_resistance_rejected(sphere):
    with pytest.raises(ImpedanceError):
        mulz_matrix(sphere, constant(-0.5))


def test_sector_impedance_is_accretive_not_hermitian(torus):
    report = classify_impedance(torus, sector(0.3, 1.0, 0.5))
    assert report['operator']['accretive']
    assert not report['operator']['hermitian']
    assert report['condition']['m_dissipative']
    assert not report['condition']['selfadjoint']
    assert report['condition']['contraction_recovery'] <= 1e-12


def test_indicator_impedance_classification(sphere):
    report = classify_impedance(sphere, indicator(0.5))
    assert report['operator']['nonnegative']
    assert report['condition']['m_dissipative']
    assert report['contraction_norm'] <= 1 + 1e-10


def test_random_contraction_condition(sphere, rng):
    k = random_contraction(sphere.dim, rng)
    verdict = classify_condition(assemble_condition(sphere, k))
    assert verdict.m_dissipative
    assert verdict.rank == sphere.dim
    assert verdict.contraction_recovery <= 1e-12

    unitary = random_contraction(sphere.dim, rng, unitary=True)
    verdict = classify_condition(assemble_condition(sphere, unitary))
    assert verdict.selfadjoint
    assert verdict.unitary


def test_condition_dimension_mismatch(sphere, rng):
    with pytest.raises(ImpedanceError):
        assemble_condition(sphere, random_contraction(3, rng))


def test_random_coefficients_are_reproducible(sphere):
    a = random_coefficients(sphere, 1.2, seed=9)
    b = random_coefficients(sphere, 1.2, seed=9)
    assert_allclose(a, b)
    assert a.size == sphere.n_scalar
    assert not np.allclose(a, random_coefficients(sphere, 1.2, seed=10))
    spec, coeffs = sample_random_impedance(sphere, 1.2, truncation=5, seed=9)
    assert coeffs.size == 5
    assert np.min(spec.node_values(sphere).real) >= 0.0


def test_friedrichs_krein_conditions_on_restricted_domain():
    surf = build_surface('sphere', 2)
    domain = np.eye(surf.dim)[:, :surf.dim // 2]
    result = fk_extensions(surf, constant(1.0), restricted_domain=domain)
    summary = result.summary()
    assert summary['friedrichs']['m_dissipative']
    assert summary['krein']['m_dissipative']
    assert summary['ordered']
    assert result.gap > 0.1
    assert result.domain_dim == surf.dim // 2


def test_indicator_extensions_are_ordered(sphere):
    result = fk_extensions(sphere, indicator(0.5))
    assert result.ordering_margin >= -1e-10
    assert 0.0 <= result.gap <= 1.0


def test_fk_needs_nonnegative_operator(torus):
    with pytest.raises(ImpedanceError):
        fk_extensions(torus, sector(0.3))


def test_harmonic_frame_invariance(torus, rng):
    rotation = ortho_group.rvs(2, random_state=rng)
    result = frame_invariance(torus, sector(0.3, 1.0, 0.5), rotation)
    assert result['verdicts_equal']
    assert result['conjugation_residual'] <= 1e-10


def test_truncation_tables():
    table = convergence_table('sphere', [2, 3], constant(2.0))
    assert list(table['truncation']) == [2, 3]
    assert table['m_dissipative'].all()
    trend = fk_gap_trend('sphere', [2, 3], indicator(0.5))
    assert list(trend.columns) == ['truncation', 'dim', 'domain_dim', 'gap', 'resolvent_gap', 'ordering_margin']
    assert (trend['ordering_margin'] >= -1e-10).all()


def test_cos_squared_impedance_on_first_shell(sphere):
    # z = cos^2 theta against the l = 1 fields (m = -1, 0, +1 ~ y, z, x)
    g = mulz_matrix(sphere, pointwise(lambda points, normals: normals[:, 2] ** 2, 'cos2'))
    grad, _, curl = sphere.blocks
    first = np.r_[0:3]
    expected = np.diag([2 / 5, 1 / 5, 2 / 5])
    assert_allclose(g[grad, grad][np.ix_(first, first)], expected, atol=1e-10)
    assert_allclose(g[curl, curl][np.ix_(first, first)], expected, atol=1e-10)
    assert np.max(np.abs(g[grad, curl][np.ix_(first, first)])) <= 1e-10
    assert np.max(np.abs(g - g.conj().T)) <= 1e-12


def test_random_coefficient_moments(sphere):
    samples = np.array([sample_random_impedance(sphere, 1.5, truncation=4, seed=seed)[1] for seed in range(1000)])
    std = sphere.lambdas[:4] ** -1.5
    normalized = samples / std
    assert np.max(np.abs(normalized.mean(axis=0))) <= 0.13
    assert np.max(np.abs(normalized.var(axis=0) - 1.0)) <= 0.2
    field = samples[0] @ sphere.scalar_table()[:4]
    assert abs(sphere.integrate(field)) <= 1e-12


def test_fk_anchor_cases():
    surf = build_surface('sphere', 2)
    eye = np.eye(surf.dim)

    full = fk_extensions(surf, constant(1.0), restricted_domain=eye)
    assert full.gap <= 1e-10
    assert full.resolvent_gap <= 1e-10
    assert_allclose(full.condition_f.contraction.matrix, full.condition_k.contraction.matrix, atol=1e-10)
    expected = cayley_kz(boundary_operator(surf, constant(1.0)))
    assert_allclose(full.condition_f.contraction.matrix, expected.matrix, atol=1e-10)

    empty = fk_extensions(surf, constant(1.0), restricted_domain=np.zeros((surf.dim, 0)))
    assert_allclose(empty.condition_f.contraction.matrix, eye, atol=1e-12)
    assert_allclose(empty.condition_k.contraction.matrix, -eye, atol=1e-12)
    assert empty.resolvent_gap == pytest.approx(1.0)
    summary = empty.summary()
    assert summary['friedrichs']['selfadjoint'] and summary['krein']['selfadjoint']
    for k in (ContractionOp.from_matrix(eye), ContractionOp.from_matrix(-eye)):
        assert classify_condition(assemble_condition(surf, k)).selfadjoint


def test_indicator_gap_trend():
    trend = fk_gap_trend('sphere', [4, 6, 8], indicator(0.5))
    assert list(trend['truncation']) == [4, 6, 8]
    assert (trend['domain_dim'] < trend['dim']).all()
    assert_allclose(trend['gap'], 1.0, atol=1e-12)
    codim = (trend['dim'] - trend['domain_dim']) / trend['dim']
    assert_allclose(trend['resolvent_gap'], np.sqrt(codim), atol=1e-8)
    assert (trend['resolvent_gap'] > 0).all()
    assert (trend['ordering_margin'] >= -1e-10).all()
