import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypokin import matrixkit as mk
from hypokin.errors import DomainError, RangeError, RejectedInput
from oracles import expm_taylor, jacobi_eigvals, random_spd


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(0, 10_000))
def test_eigenvalues_match_jacobi(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    A = A + A.T
    np.testing.assert_allclose(mk.sym_eig(A).eigenvalues, jacobi_eigvals(A), atol=1e-10)


def test_sym_eig_reconstructs_and_is_deterministic():
    rng = np.random.default_rng(1)
    A = random_spd(rng, 5)
    s1, s2 = mk.sym_eig(A), mk.sym_eig(A.copy())
    V, w = s1.eigenvectors, s1.eigenvalues
    np.testing.assert_allclose(V @ np.diag(w) @ V.T, A, atol=1e-12)
    assert np.array_equal(s1.eigenvectors, s2.eigenvectors)


def test_is_psd_cases():
    assert mk.is_psd(np.eye(3))[0]
    ok, lo = mk.is_psd(np.diag([1.0, -1e-3]))
    assert not ok and lo == pytest.approx(-1e-3)
    # rounding-level negatives are accepted under the default tolerance
    assert mk.is_psd(np.diag([1.0, -1e-14]))[0]
    with pytest.raises(RejectedInput):
        mk.is_psd(np.eye(2), tol=-1.0)


def test_rejects_bad_input():
    with pytest.raises(RejectedInput):
        mk.sym_eig(np.ones((2, 3)))
    with pytest.raises(RejectedInput):
        mk.min_eig(np.array([[np.nan, 0], [0, 1]]))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(0, 10_000), st.floats(0.0, 3.0))
def test_mat_exp_matches_taylor(n, seed, t):
    A = np.random.default_rng(seed).normal(size=(n, n))
    np.testing.assert_allclose(mk.mat_exp(A, t), expm_taylor(A, t), rtol=1e-9, atol=1e-12)


def test_mat_exp_special_values():
    np.testing.assert_allclose(mk.mat_exp(np.zeros((3, 3)), 5.0), np.eye(3))
    R = np.array([[0.0, -1.0], [1.0, 0.0]])
    E = mk.mat_exp(R, np.pi / 2)
    np.testing.assert_allclose(E, [[0, -1], [1, 0]], atol=1e-14)
    # strongly decaying exponentials are fine
    assert mk.op_norm2(mk.mat_exp(-np.eye(2), 800.0)) < 1e-300
    with pytest.raises(RangeError):
        mk.mat_exp(np.eye(2), 1000.0)


def test_semigroup_property():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(4, 4))
    np.testing.assert_allclose(mk.mat_exp(A, 0.7) @ mk.mat_exp(A, 0.4), mk.mat_exp(A, 1.1),
                               rtol=1e-11, atol=1e-12)


def test_op_norm_and_kron():
    assert mk.op_norm2(np.diag([3.0, -4.0])) == pytest.approx(4.0)
    A, B = np.array([[1.0, 2.0], [0.0, 1.0]]), np.eye(2)
    assert mk.kron(A, B).shape == (4, 4)
    np.testing.assert_allclose(np.trace(mk.kron(A, B)), np.trace(A) * np.trace(B))


def test_spd_inv_sqrt():
    rng = np.random.default_rng(4)
    A = random_spd(rng, 4)
    S = mk.spd_inv_sqrt(A)
    np.testing.assert_allclose(S @ A @ S, np.eye(4), atol=1e-12)
    with pytest.raises(DomainError):
        mk.spd_inv_sqrt(np.diag([1.0, 0.0]))
