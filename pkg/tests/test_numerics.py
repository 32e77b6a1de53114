import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose

from distobs.numerics import (NumericsError, ToleranceConfig, as_matrix, cluster_values, eig, kron,
                              null_basis, range_basis, rank, spectral_radius)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def square(max_n=12):
    return st.integers(1, max_n).flatmap(lambda n: arrays(np.float64, (n, n), elements=finite))


def rect(max_n=12):
    return st.tuples(st.integers(1, max_n), st.integers(1, max_n)).flatmap(
        lambda s: arrays(np.float64, s, elements=finite))


def test_tolerance_config_bounds():
    ToleranceConfig(rank_rel_tol=1e-6)
    for bad in (0.0, -1e-9, 1e-3, 1.0):
        with pytest.raises(ValueError):
            ToleranceConfig(eig_cluster_tol=bad)


def test_as_matrix_rejects_bad_input():
    with pytest.raises(NumericsError):
        as_matrix([[1.0, np.nan]])
    with pytest.raises(NumericsError):
        as_matrix(np.zeros((0, 3)))
    with pytest.raises(NumericsError):
        as_matrix(np.zeros((2, 2, 2)))
    assert as_matrix(np.zeros((0, 3)), allow_empty=True).shape == (0, 3)
    assert as_matrix(2.0).shape == (1, 1)


def test_eig_identity_single_cluster():
    s = eig(np.eye(3))
    assert list(s.multiplicities) == [3]
    assert_allclose(s.cluster_values, [1.0])


def test_eig_path_laplacian():
    # characteristic polynomial lam (lam - 1) (lam - 3)
    L = np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1]], dtype=float)
    assert_allclose(np.sort(eig(L).eigenvalues.real), [0.0, 1.0, 3.0], atol=1e-12)
    assert_allclose(np.poly(L), [1.0, -4.0, 3.0, 0.0], atol=1e-12)


def test_eig_rotation():
    vals = eig(np.array([[0.0, 1.0], [-1.0, 0.0]])).eigenvalues
    assert_allclose(sorted(vals, key=lambda z: z.imag), [-1j, 1j], atol=1e-14)


def test_eig_rejects_non_square():
    with pytest.raises(NumericsError):
        eig(np.ones((2, 3)))


def test_eig_jordan_block_is_one_cluster():
    s = eig(np.array([[1.0, 1.0], [0.0, 1.0]]))
    assert list(s.multiplicities) == [2]


def test_eig_survives_tiny_entries():
    # LAPACK balancing returns a wrong eigenvector here unless sub-eps entries are flushed
    e = 1.95651135e-54
    M = np.array([[e, e, e], [1.0, 1.0, e], [e, e, e]])
    s = eig(M)
    for lam, v in zip(s.eigenvalues, s.right_vectors.T):
        assert np.linalg.norm(M @ v - lam * v) < 1e-12
    assert_allclose(np.sort(s.eigenvalues.real), [0.0, 0.0, 1.0], atol=1e-15)


def test_cluster_values_chains():
    groups = cluster_values([0.0, 0.5e-8, 1.0e-8, 1.0], 0.6e-8)
    assert sorted(len(g) for g in groups) == [1, 3]


def test_rank_examples():
    assert rank(np.eye(3)) == 3
    assert rank(np.zeros((2, 5))) == 0
    assert rank(np.array([[1.0, 2.0], [2.0, 4.0]])) == 1
    assert rank(np.zeros((0, 4))) == 0


def test_rank_reference_scale():
    # a 1x1 matrix of pure rounding noise is rank 1 on its own scale, rank 0 against ||A||
    tiny = np.array([[6.7e-16]])
    assert rank(tiny) == 1
    assert rank(tiny, scale=1.2) == 0


def test_null_basis_examples():
    N = null_basis(np.array([[1.0, 1.0]]))
    assert N.shape == (2, 1)
    assert_allclose(abs(N[:, 0] @ np.array([1.0, -1.0]) / np.sqrt(2)), 1.0)
    assert null_basis(np.eye(2)).shape == (2, 0)
    L = np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1]], dtype=float)
    N = null_basis(L)
    assert N.shape == (3, 1)
    assert_allclose(abs(N[:, 0] @ np.ones(3) / np.sqrt(3)), 1.0)


def test_kron_examples():
    A = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert_allclose(kron(np.eye(2), A), np.block([[A, np.zeros((2, 2))], [np.zeros((2, 2)), A]]))
    assert_allclose(kron([[2.0]], A), 2 * A)
    expected = np.array([[0, 1, 0, 1], [0, 0, 0, 0], [0, 0, 0, 1], [0, 0, 0, 0]], dtype=float)
    assert_allclose(kron([[1.0, 1.0], [0.0, 1.0]], [[0.0, 1.0], [0.0, 0.0]]), expected)


@given(square())
def test_eig_trace_and_det(M):
    vals = eig(M).eigenvalues
    norm = max(np.linalg.norm(M, 2), 1e-300)
    assert abs(vals.sum() - np.trace(M)) <= 1e-6 * norm + 1e-12
    with np.errstate(divide="ignore", under="ignore"):
        det = np.linalg.det(M)
    # relative comparison, with an absolute floor for numerically singular M
    assert abs(np.prod(vals) - det) <= 1e-6 * abs(det) + 1e-9 * norm ** M.shape[0]


@given(square())
def test_eig_residual_bound(M):
    s = eig(M)
    norm = np.linalg.norm(M, 2)
    for lam, v in zip(s.eigenvalues, s.right_vectors.T):
        assert np.linalg.norm(M @ v - lam * v) <= s.cluster_tol * norm * np.linalg.norm(v) + 1e-300


@given(rect())
def test_rank_nullity(M):
    assert rank(M) + null_basis(M).shape[1] == M.shape[1]
    assert range_basis(M).shape[1] == rank(M)


@given(rect())
def test_null_basis_annihilates(M):
    N = null_basis(M)
    if N.shape[1]:
        cfg = ToleranceConfig()
        assert np.max(np.abs(M @ N)) <= cfg.rank_rel_tol * max(M.shape) * np.linalg.norm(M, 2) + 1e-300
        assert_allclose(N.conj().T @ N, np.eye(N.shape[1]), atol=1e-12)


@given(st.integers(1, 6).flatmap(lambda n: arrays(np.float64, (n, n), elements=finite)),
       st.integers(1, 6).flatmap(lambda n: arrays(np.float64, (n, n), elements=finite)))
def test_kron_radius_multiplicative(Ma, Mb):
    ra, rb = spectral_radius(Ma), spectral_radius(Mb)
    rk = spectral_radius(kron(Ma, Mb))
    # eigenvalues of defective matrices carry sqrt(eps)-sized errors
    scale = max(np.linalg.norm(Ma, 2) * np.linalg.norm(Mb, 2), 1e-300)
    assert abs(rk - ra * rb) <= 1e-8 * max(ra * rb, 1e-300) + 1e-6 * scale
