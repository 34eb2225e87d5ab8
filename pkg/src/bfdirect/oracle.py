"""Reference answers: dense LU solve and the PEC-cylinder eigenfunction series."""

from dataclasses import dataclass
import math
import warnings

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

from .efie import WAVENUMBER, ImpedanceKernel, assemble_rhs, _as_mesh
from .linalg import SingularMatrixError
from .special import bessel_jy_orders

DENSE_CAP = 8192


@dataclass
class DenseSolution:
    currents: np.ndarray
    condition_estimate: float
    residual: float = 0.0


def dense_solve(segments, excitation, cap=DENSE_CAP):
    """Assemble the full impedance matrix and solve by partial-pivoting LU.

    ``excitation`` may be an :class:`~bfdirect.efie.Excitation` or an
    explicit right-hand side (vector or ``N x k`` array).
    """
    mesh = _as_mesh(segments)
    n = len(mesh)
    if n > cap:
        raise ValueError(f"dense solve limited to N <= {cap}, got {n}")
    kernel = segments if isinstance(segments, ImpedanceKernel) else ImpedanceKernel(mesh)
    z = kernel.block(np.arange(n), np.arange(n))
    if isinstance(excitation, np.ndarray):
        v = excitation.astype(complex)
    else:
        v = assemble_rhs(excitation, mesh)
    anorm = np.linalg.norm(z, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(z, check_finite=False)
    if np.min(np.abs(np.diag(lu))) <= 1e-14 * np.max(np.abs(z)):
        raise SingularMatrixError("impedance matrix is numerically singular")
    rcond, info = lapack.zgecon(lu, anorm, norm="1")
    if info != 0 or rcond == 0:
        raise SingularMatrixError("condition estimate failed")
    x = scipy.linalg.lu_solve((lu, piv), v, check_finite=False)
    res = np.linalg.norm(z @ x - v) / np.linalg.norm(v) if np.any(v) else 0.0
    return DenseSolution(x, float(1.0 / rcond), float(res))


def mie_terms(ka):
    """Number of series terms kept for size parameter ``ka``."""
    return int(math.ceil(ka + 12.0 * ka ** (1.0 / 3.0) + 10.0))


def mie_coefficients(ka, order=None):
    m_max = mie_terms(ka) if order is None else int(order)
    j, y = bessel_jy_orders(m_max, ka)
    return j / (j - 1j * y)


def mie_rcs_circle(radius, angles, incidence_angle=0.0, k=WAVENUMBER, order=None):
    """Echo width of a PEC circular cylinder (TM), ``10*log10(sigma/lambda)``.

    ``incidence_angle`` is the direction the wave arrives from, matching
    :func:`~bfdirect.efie.assemble_rhs`; backscatter is ``angle ==
    incidence_angle``. Angles are in radians.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    c = mie_coefficients(k * radius, order)
    m = np.arange(1, len(c))
    # arrival direction phi_inc means propagation toward phi_inc + pi
    psi = angles - incidence_angle - math.pi
    total = c[0] + 2.0 * np.cos(np.outer(psi, m)) @ c[1:]
    sigma = (4.0 / k) * np.abs(total) ** 2
    return 10.0 * np.log10(sigma / (2.0 * math.pi / k))
