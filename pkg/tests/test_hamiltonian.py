import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import full_hamiltonian, project
from starksense.basis import enumerate_basis
from starksense.hamiltonian import (DimensionError, ModelParams, build_hamiltonian, dh_hamiltonian,
                                    hamiltonian_matrix)


def test_two_site_matrix():
    H = build_hamiltonian(ModelParams(2, -8.0, -3.0), enumerate_basis(2, 1))
    np.testing.assert_array_equal(H.matrix, [[0, -8], [-8, -3]])


def test_three_site_tridiagonal():
    J, h = 1.7, -2.3
    M = hamiltonian_matrix(ModelParams(3, J, h), enumerate_basis(3, 1))
    np.testing.assert_allclose(np.diag(M), [0, h, 2 * h])
    np.testing.assert_allclose(np.diag(M, 1), [J, J])
    assert M[0, 2] == 0


def test_onsite_offsets():
    p = ModelParams(9, -8.0, -3.0)
    assert p.onsite[0] == 0.0
    np.testing.assert_allclose(np.diff(p.onsite), -3.0)


def test_four_site_double_excitation_entries_match_kronecker_projection():
    b = enumerate_basis(4, 2)
    M = hamiltonian_matrix(ModelParams(4, -8.0, -3.0), b)
    assert M[b.index_of({1, 2}), b.index_of({1, 3})] == -8.0
    assert M[b.index_of({1, 2}), b.index_of({3, 4})] == 0.0
    np.testing.assert_allclose(M, project(full_hamiltonian(4, -8.0, -3.0), 4, 2), atol=1e-12)


@pytest.mark.parametrize("L,k", [(L, k) for L in range(1, 6) for k in (1, 2) if k <= L])
def test_subspace_equals_projected_full_hamiltonian(L, k):
    for J, h in [(-8.0, -3.0), (-8.0, -20.0), (2.5, 0.7)]:
        M = hamiltonian_matrix(ModelParams(L, J, h), enumerate_basis(L, k))
        np.testing.assert_allclose(M, project(full_hamiltonian(L, J, h), L, k), atol=1e-12)


def test_dh_hamiltonian():
    np.testing.assert_array_equal(np.diag(dh_hamiltonian(enumerate_basis(3, 1))), [0, 1, 2])
    b = enumerate_basis(4, 2)
    assert dh_hamiltonian(b)[b.index_of({2, 4}), b.index_of({2, 4})] == 4


@pytest.mark.parametrize("k", [1, 2])
def test_dh_hamiltonian_finite_difference(k):
    b = enumerate_basis(6, k)
    eps, h = 1e-4, -7.3
    fd = (hamiltonian_matrix(ModelParams(6, -8, h + eps), b) - hamiltonian_matrix(ModelParams(6, -8, h - eps), b)) / (2 * eps)
    np.testing.assert_allclose(fd, dh_hamiltonian(b), atol=1e-8)


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        build_hamiltonian(ModelParams(5), enumerate_basis(4, 1))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 9), st.sampled_from([1, 2]), st.floats(-30, 0), st.floats(-10, 10))
def test_spectral_invariants(L, k, h, J):
    b = enumerate_basis(L, k)
    H = build_hamiltonian(ModelParams(L, J, h), b)
    M, lam, V = H.matrix, H.eigenvalues, H.eigenvectors
    assert np.max(np.abs(M - M.T)) <= 1e-12
    np.testing.assert_allclose(V.T @ V, np.eye(b.dim), atol=1e-10)
    np.testing.assert_allclose(V @ np.diag(lam) @ V.T, M, atol=1e-9)
    expected_trace = sum(sum(j - 1 for j in p) * h for p in b.patterns)
    assert abs(lam.sum() - expected_trace) < 1e-9


@pytest.mark.parametrize("L", [2, 5, 9])
def test_sign_of_hopping_irrelevant_at_zero_field(L):
    b = enumerate_basis(L, 1)
    a = build_hamiltonian(ModelParams(L, -8.0, 0.0), b).eigenvalues
    c = build_hamiltonian(ModelParams(L, 8.0, 0.0), b).eigenvalues
    np.testing.assert_allclose(np.sort(a), np.sort(c), atol=1e-9)
