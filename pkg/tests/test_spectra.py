import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collapselab.errors import DimensionError, InvalidMatrix, SingularMatrix
from collapselab.spectra import (
    as_sym,
    commutes,
    eig_sym,
    is_psd,
    jacobi_eigh,
    joint_basis,
    lift,
    masked,
    mat_pow,
    principal_angle,
)


def _rand_sym(seed, d=8):
    m = np.random.default_rng(seed).standard_normal((d, d))
    return (m + m.T) / 2


def _rand_psd(seed, d=5, floor=0.1):
    m = np.random.default_rng(seed).standard_normal((d, d))
    return m @ m.T + floor * np.eye(d)


def test_identity_eigenvalues():
    p = eig_sym(np.eye(3))
    np.testing.assert_allclose(p.eigenvalues, [1, 1, 1])


def test_diag_eigenvectors_are_axes():
    p = eig_sym(np.diag([1.0, 3.0]))
    np.testing.assert_allclose(p.eigenvalues, [3, 1])
    np.testing.assert_allclose(np.abs(p.eigenvectors), [[0, 1], [1, 0]], atol=1e-14)


@pytest.mark.parametrize("method", ["lapack", "jacobi"])
def test_random_reconstruction(method):
    m = _rand_sym(7)
    p = eig_sym(m, method=method)
    u = p.eigenvectors
    assert np.max(np.abs(u @ u.T - np.eye(8))) <= 1e-10
    assert np.max(np.abs(p.reconstruct() - m)) <= 1e-9 * (1 + np.abs(p.eigenvalues).max())
    assert np.all(np.diff(p.eigenvalues) <= 0)


def test_jacobi_matches_lapack():
    for seed in range(5):
        m = _rand_sym(seed, 12)
        w, _ = jacobi_eigh(m)
        np.testing.assert_allclose(np.sort(w), np.linalg.eigvalsh(m), atol=1e-10)


def test_nonfinite_rejected():
    with pytest.raises(InvalidMatrix):
        eig_sym(np.array([[1.0, np.nan], [np.nan, 1.0]]))


def test_dim_guard():
    with pytest.raises(DimensionError):
        as_sym(np.eye(513))


def test_symmetrized_exactly():
    m = as_sym(np.array([[1.0, 2.0], [2.0 + 1e-13, 1.0]]))
    assert m[0, 1] == m[1, 0]


def test_masked():
    p = eig_sym(np.diag([3.0, 1.0]))
    np.testing.assert_allclose(masked(p, [1, 0]), np.diag([3.0, 0.0]), atol=1e-15)
    m = _rand_sym(3)
    np.testing.assert_allclose(masked(eig_sym(m), np.ones(8)), m, atol=1e-9)
    with pytest.raises(DimensionError):
        masked(p, [1, 0, 1])


def test_mat_pow_examples():
    np.testing.assert_allclose(mat_pow(np.diag([4.0, 1.0]), -0.5), np.diag([0.5, 1.0]))
    m = _rand_psd(1)
    np.testing.assert_allclose(mat_pow(mat_pow(m, 0.5), 2), m, atol=1e-9)
    np.testing.assert_allclose(mat_pow(m, 1), m, atol=1e-9)
    with pytest.raises(SingularMatrix):
        mat_pow(np.diag([0.0, 1.0]), -1)


@pytest.mark.parametrize("a", [-1, -0.5, 0.5, 1])
@pytest.mark.parametrize("b", [-1, -0.5, 0.5, 1])
def test_mat_pow_additive(a, b):
    m = _rand_psd(2, floor=0.5)
    np.testing.assert_allclose(mat_pow(m, a + b), mat_pow(m, a) @ mat_pow(m, b), atol=1e-8)


def test_commutes():
    assert commutes(np.diag([1.0, 2.0]), np.diag([5.0, -1.0]))
    r = np.array([[1, -1], [1, 1]]) / np.sqrt(2)
    assert not commutes(np.diag([1.0, 2.0]), r @ np.diag([1.0, 3.0]) @ r.T)
    m = _rand_sym(4, 3)
    assert commutes(m, np.eye(3))
    with pytest.raises(DimensionError):
        commutes(np.eye(2), np.eye(3))


def test_psd_and_joint_basis():
    assert is_psd(np.diag([1.0, 0.0]))
    assert not is_psd(np.diag([1.0, -0.1]))
    rng = np.random.default_rng(0)
    q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    a = (q * [1, 2, 3, 4]) @ q.T
    c = (q * [1, 1, 5, 0]) @ q.T
    j = joint_basis(a, c)
    for m in (a, c):
        d = j.T @ m @ j
        assert np.max(np.abs(d - np.diag(np.diag(d)))) < 1e-9


def test_lift_and_angle():
    g = _rand_psd(5, 3)
    w = lift(g, 3)
    np.testing.assert_allclose(w.T @ w, g, atol=1e-10)
    e = np.eye(3)
    assert principal_angle(e[:, :2], e[:, [1, 0]]) < 1e-12
    assert abs(principal_angle(e[:, :1], e[:, 1:2]) - np.pi / 2) < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 7))
def test_reconstruction_is_involutive(seed, d):
    m = _rand_sym(seed, d)
    p = eig_sym(m)
    q = eig_sym(masked(p, np.ones(d)))
    np.testing.assert_allclose(q.eigenvalues, p.eigenvalues, atol=1e-8)
