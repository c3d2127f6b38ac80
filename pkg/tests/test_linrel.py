import numpy as np
import pytest
from numpy.testing import assert_allclose

from linrel import (ContractionOp, LinearRelation, PivotSpace, RelationError, adjoint_relation, cayley,
                    classify_relation, friedrichs, inverse_cayley, krein, random_contraction,
                    random_nonnegative_relation, resolvent_of_relation, resolvent_order_margin,
                    sample_nonnegative_extensions, subspace_distance)


def test_pivot_space_rejects_bad_weights():
    with pytest.raises(RelationError):
        PivotSpace(3, [1.0, 0.0, 2.0])
    with pytest.raises(RelationError):
        PivotSpace(2, [1.0, 1.0, 1.0])


def test_graph_classification():
    eye = np.eye(3)
    absorbing = classify_relation(LinearRelation.graph(-1j * eye))
    assert absorbing.is_dissipative
    assert absorbing.is_maximal_dissipative
    assert not absorbing.is_symmetric

    a = np.array([[2.0, 1.0j, 0.0], [-1.0j, 3.0, 0.0], [0.0, 0.0, 1.0]])
    hermitian = classify_relation(LinearRelation.graph(a))
    assert hermitian.is_selfadjoint
    assert hermitian.is_nonnegative
    assert hermitian.rank == 3

    amplifying = classify_relation(LinearRelation.graph(1j * eye))
    assert not amplifying.is_dissipative
    assert amplifying.margin < 0


def test_rank_deficient_relation_is_not_maximal():
    rel = LinearRelation.from_pairs(PivotSpace(2), [[1.0], [0.0]], [[-1.0j], [0.0]])
    verdict = classify_relation(rel)
    assert verdict.is_dissipative
    assert not verdict.is_maximal_dissipative
    assert not cayley(rel).is_full


def test_sampled_margin_never_beats_exact_margin(rng):
    f = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    rel = LinearRelation.from_pairs(PivotSpace(4), f, -1j * f)
    verdict = classify_relation(rel, samples=200, seed=3)
    assert verdict.sampled_margin >= verdict.margin - 1e-12


def test_cayley_anchors():
    space = PivotSpace(3)
    eye = np.eye(3)
    assert_allclose(cayley(LinearRelation.graph(-1j * eye)).matrix, np.zeros((3, 3)), atol=1e-12)
    assert_allclose(cayley(LinearRelation.graph(np.zeros((3, 3)))).matrix, -eye, atol=1e-12)
    assert_allclose(cayley(LinearRelation.multivalued(space)).matrix, eye, atol=1e-12)


def test_cayley_rejects_non_dissipative():
    with pytest.raises(RelationError):
        cayley(LinearRelation.graph(1j * np.eye(2)))


@pytest.mark.parametrize('dim', [1, 2, 5, 8])
def test_cayley_roundtrip(dim, rng):
    k = random_contraction(dim, rng)
    theta = inverse_cayley(k)
    assert classify_relation(theta).is_maximal_dissipative
    back = cayley(theta)
    assert back.is_full
    assert_allclose(back.matrix, k.matrix, atol=1e-12)
    assert subspace_distance(inverse_cayley(back), theta) <= 1e-12


def test_cayley_with_weighted_pivot(rng):
    space = PivotSpace(3, [0.5, 2.0, 4.0])
    a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    # -i (A^H W A + I) is dissipative in the weighted inner product
    w = np.diag(space.weights)
    t = -1j * (np.linalg.solve(w, a.conj().T @ w @ a) + np.eye(3))
    rel = LinearRelation.graph(t, space)
    k = cayley(rel)
    assert k.norm <= 1 + 1e-12
    assert subspace_distance(inverse_cayley(k), rel) <= 1e-10


def test_contraction_norm_check():
    with pytest.raises(RelationError):
        ContractionOp.from_matrix(2 * np.eye(2))
    assert ContractionOp.from_matrix(np.diag([1.0, -1.0])).is_unitary()


def test_adjoint_of_graph(rng):
    a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    adj = adjoint_relation(LinearRelation.graph(a))
    assert subspace_distance(adj, LinearRelation.graph(a.conj().T)) <= 1e-10
    assert subspace_distance(adjoint_relation(adj), LinearRelation.graph(a)) <= 1e-10


def test_to_operator():
    a = np.array([[1.0, 2.0], [0.0, 1.0j]])
    assert_allclose(LinearRelation.graph(a).to_operator(), a, atol=1e-12)
    with pytest.raises(RelationError):
        LinearRelation.multivalued(PivotSpace(2)).to_operator()


@pytest.mark.parametrize('a', [0.5, 2.0])
def test_friedrichs_krein_worked_example(a):
    psi = LinearRelation.from_pairs(PivotSpace(2), [[1.0], [0.0]], [[a], [0.0]])
    assert_allclose(resolvent_of_relation(friedrichs(psi)), np.diag([1 / (1 + a), 0.0]), atol=1e-12)
    assert_allclose(resolvent_of_relation(krein(psi)), np.diag([1 / (1 + a), 1.0]), atol=1e-12)


def test_extensions_need_nonnegative_relation():
    rel = LinearRelation.from_pairs(PivotSpace(2), [[1.0], [0.0]], [[-1.0], [0.0]])
    with pytest.raises(RelationError):
        friedrichs(rel)
    with pytest.raises(RelationError):
        krein(rel)


@pytest.mark.parametrize('index', range(6))
def test_friedrichs_krein_ordering(index):
    rng = np.random.default_rng([7, index])
    rel = random_nonnegative_relation(2 + index, rng)
    f_ext, k_ext = friedrichs(rel), krein(rel)
    for ext in (f_ext, k_ext):
        verdict = classify_relation(ext)
        assert verdict.is_selfadjoint
        assert verdict.is_nonnegative
        assert ext.contains(rel)
    assert resolvent_order_margin(f_ext, k_ext) >= -1e-10


def test_sampled_extensions_lie_between(rng):
    rel = random_nonnegative_relation(5, rng)
    extensions = sample_nonnegative_extensions(rel, 3, rng)
    f_ext, k_ext = extensions[:2]
    assert subspace_distance(f_ext, friedrichs(rel)) <= 1e-10
    for ext in extensions[2:]:
        assert classify_relation(ext).is_selfadjoint
        assert resolvent_order_margin(f_ext, ext) >= -1e-10
        assert resolvent_order_margin(ext, k_ext) >= -1e-10


def test_adjoint_examples():
    space = PivotSpace(3)
    multivalued = LinearRelation.multivalued(space)
    assert subspace_distance(adjoint_relation(multivalued), multivalued) <= 1e-12
    assert adjoint_relation(LinearRelation.trivial(space)).rank == 6
    adj = adjoint_relation(LinearRelation.graph(np.diag([1j])))
    assert subspace_distance(adj, LinearRelation.graph(np.diag([-1j]))) <= 1e-12


def test_resolvent_examples():
    space = PivotSpace(2)
    assert_allclose(resolvent_of_relation(LinearRelation.graph(np.diag([1.0, 2.0]))), np.diag([1 / 2, 1 / 3]),
                    atol=1e-12)
    assert_allclose(resolvent_of_relation(LinearRelation.graph(np.zeros((2, 2)))), np.eye(2), atol=1e-12)
    assert_allclose(resolvent_of_relation(LinearRelation.multivalued(space)), np.zeros((2, 2)), atol=1e-12)


def test_extensions_of_trivial_relations():
    space = PivotSpace(3)
    trivial = LinearRelation.trivial(space)
    multivalued = LinearRelation.multivalued(space)
    zero = LinearRelation.graph(np.zeros((3, 3)))
    assert subspace_distance(friedrichs(trivial), multivalued) <= 1e-12
    assert subspace_distance(krein(trivial), zero) <= 1e-12
    assert subspace_distance(friedrichs(multivalued), multivalued) <= 1e-12
    assert subspace_distance(krein(zero), zero) <= 1e-12
    assert subspace_distance(friedrichs(zero), zero) <= 1e-12


def test_domain_ignores_rounding_noise(rng):
    n = 4
    noise = 1e-16 * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
    rel = LinearRelation.from_scaled(PivotSpace(n), noise, np.eye(n))
    assert rel.domain().shape[1] == 0
    assert rel.multivalued_part().shape[1] == n
    multivalued = LinearRelation.multivalued(PivotSpace(n))
    f_ext, k_ext = friedrichs(rel), krein(rel)
    assert f_ext.rank == n
    assert classify_relation(f_ext).is_selfadjoint
    assert subspace_distance(f_ext, multivalued) <= 1e-12
    assert resolvent_order_margin(f_ext, k_ext) >= -1e-10


def test_friedrichs_krein_selfadjoint_over_many_instances():
    for seed in range(300):
        rel = random_nonnegative_relation(2 + seed % 7, np.random.default_rng(seed))
        for ext in (friedrichs(rel), krein(rel)):
            assert classify_relation(ext).is_selfadjoint, seed
        assert resolvent_order_margin(friedrichs(rel), krein(rel)) >= -1e-10


def test_subspace_distance_is_a_sine():
    a = LinearRelation.graph(np.diag([1.0, 2.0]))
    b = LinearRelation.multivalued(PivotSpace(2))
    assert 0.0 <= subspace_distance(a, b) <= 1.0
    assert subspace_distance(a, a) <= 1e-14
