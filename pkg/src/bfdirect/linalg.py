"""Dense complex kernels: LU solves, truncated SVD, pseudoinverse."""

import warnings

import numpy as np
import scipy.linalg

PIVOT_TOL = 1e-14
PINV_CUTOFF = 1e-12


class SingularMatrixError(np.linalg.LinAlgError):
    pass


class LUFactor:
    """Partial-pivoting LU of a square matrix, reusable for many solves.

    ``solve(b, trans=True)`` solves with the plain (non-conjugate) transpose.
    """

    def __init__(self, a):
        a = np.asarray(a)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("LU needs a square matrix")
        scale = np.max(np.abs(a)) if a.size else 0.0
        with warnings.catch_warnings():
            # singularity is reported below as SingularMatrixError
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            self.lu, self.piv = scipy.linalg.lu_factor(a, check_finite=False)
        pivots = np.abs(np.diag(self.lu))
        if a.size == 0:
            return
        if scale == 0.0 or np.min(pivots) < PIVOT_TOL * scale:
            raise SingularMatrixError("matrix is numerically singular")

    @property
    def shape(self):
        return self.lu.shape

    def solve(self, b, trans=False):
        if self.lu.size == 0:
            return np.array(b, dtype=complex)
        return scipy.linalg.lu_solve((self.lu, self.piv), b, trans=1 if trans else 0,
                                     check_finite=False)


def lu_solve(a, b):
    """Solve ``a @ x = b`` with partial pivoting; raises on singular ``a``."""
    return LUFactor(a).solve(b)


def low_rank_approx(a, tol):
    """Truncated SVD factors ``(U, W)`` with ``||a - U @ W||_2 <= tol*||a||_2``.

    The rank is the smallest one whose discarded tail has Frobenius norm at
    most ``tol * s_max``; that also bounds the error seen by random probes,
    which a bare ``s_{r+1} <= tol * s_max`` cut does not when many singular
    values sit just under the threshold. The singular values are folded
    into ``U``. A zero matrix gives rank 0.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    a = np.asarray(a)
    m, n = a.shape
    if a.size == 0:
        return np.zeros((m, 0), a.dtype), np.zeros((0, n), a.dtype)
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    if s[0] == 0:
        rank = 0
    else:
        tail = np.sqrt(np.cumsum((s * s)[::-1]))[::-1]  # tail[i] = ||s[i:]||
        rank = int(np.count_nonzero(tail > tol * s[0]))
    return u[:, :rank] * s[:rank], vh[:rank].copy()


def pinv(a, rel_cutoff=PINV_CUTOFF):
    """Moore-Penrose pseudoinverse; singular values below ``rel_cutoff*s_max`` are dropped."""
    if not 0 < rel_cutoff < 1:
        raise ValueError("rel_cutoff must lie in (0, 1)")
    a = np.asarray(a)
    if a.size == 0:
        return np.zeros(a.shape[::-1], a.dtype)
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    keep = s > rel_cutoff * s[0] if s[0] > 0 else np.zeros_like(s, dtype=bool)
    return (vh[keep].conj().T / s[keep]) @ u[:, keep].conj().T


def rq_orthonormal(a):
    """Factor ``a = t @ q`` with ``q`` having orthonormal rows."""
    q, r = np.linalg.qr(a.T.conj())
    return r.T.conj(), q.T.conj()


def truncate_columns(c, tol, ref=None):
    """SVD of ``c``; returns ``(u_r, s_r vh_r)`` keeping ``s > tol*ref``.

    ``ref`` defaults to the largest singular value of ``c`` itself.
    """
    if c.size == 0:
        return c[:, :0], np.zeros((0, c.shape[1]), c.dtype)
    u, s, vh = np.linalg.svd(c, full_matrices=False)
    cut = tol * (s[0] if ref is None else ref)
    rank = int(np.count_nonzero(s > cut)) if s[0] > 0 else 0
    return u[:, :rank].copy(), s[:rank, None] * vh[:rank]
