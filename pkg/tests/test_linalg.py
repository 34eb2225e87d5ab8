import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bfdirect.linalg import (LUFactor, SingularMatrixError, low_rank_approx, lu_solve, pinv,
                             rq_orthonormal, truncate_columns)

from conftest import cgauss


def test_lu_identity(rng):
    b = cgauss(rng, (5, 2))
    assert np.allclose(lu_solve(np.eye(5), b), b)


def test_lu_random_residual(rng):
    a = cgauss(rng, (50, 50)) + 10 * np.eye(50)
    b = cgauss(rng, (50, 3))
    x = lu_solve(a, b)
    assert np.linalg.norm(a @ x - b) / np.linalg.norm(b) <= 1e-10
    xt = LUFactor(a).solve(b, trans=True)
    assert np.linalg.norm(a.T @ xt - b) / np.linalg.norm(b) <= 1e-10


def test_lu_singular(rng):
    a = cgauss(rng, (6, 6))
    a[2] = 0
    with pytest.raises(SingularMatrixError):
        lu_solve(a, np.ones(6))


def test_low_rank_outer_product(rng):
    u, v = cgauss(rng, (9, 1)), cgauss(rng, (1, 7))
    U, W = low_rank_approx(u @ v, 1e-8)
    assert U.shape[1] == 1
    assert np.allclose(U @ W, u @ v)


def test_low_rank_zero():
    U, W = low_rank_approx(np.zeros((4, 3)), 1e-4)
    assert U.shape == (4, 0) and W.shape == (0, 3)


def test_low_rank_exact_rank(rng):
    a = cgauss(rng, (64, 5)) @ cgauss(rng, (5, 64))
    U, W = low_rank_approx(a, 1e-10)
    assert U.shape[1] == 5
    assert np.linalg.norm(a - U @ W, 2) <= 1e-12 * np.linalg.norm(a, 2)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 30), st.integers(2, 30), st.floats(1e-8, 0.5), st.integers(0, 2 ** 31))
def test_low_rank_bound_property(m, n, tol, seed):
    rng = np.random.default_rng(seed)
    s = np.logspace(0, -10, min(m, n))
    q1, _ = np.linalg.qr(cgauss(rng, (m, m)))
    q2, _ = np.linalg.qr(cgauss(rng, (n, n)))
    a = (q1[:, :len(s)] * s) @ q2[:len(s)]
    U, W = low_rank_approx(a, tol)
    assert np.linalg.norm(a - U @ W, 2) <= tol * np.linalg.norm(a, 2) * (1 + 1e-8)


def test_pinv_examples(rng):
    assert np.allclose(pinv(np.eye(3)), np.eye(3))
    assert np.allclose(pinv(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]))
    a = cgauss(rng, (40, 8))
    p = pinv(a)
    assert np.linalg.norm(a @ p @ a - a) <= 1e-10 * np.linalg.norm(a)
    assert np.linalg.norm(p @ a @ p - p) <= 1e-10 * np.linalg.norm(p)
    with pytest.raises(ValueError):
        pinv(a, 0.0)


def test_rq_and_truncate(rng):
    a = cgauss(rng, (4, 9))
    t, q = rq_orthonormal(a)
    assert np.allclose(t @ q, a)
    assert np.allclose(q @ q.conj().T, np.eye(4))
    c = cgauss(rng, (12, 3)) @ cgauss(rng, (3, 10))
    u, sw = truncate_columns(c, 1e-10)
    assert u.shape[1] == 3 and np.allclose(u @ sw, c)
    u, sw = truncate_columns(c, 1e-10, ref=1e12)
    assert u.shape[1] == 0
