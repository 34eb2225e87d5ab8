"""TM_z electric field integral equation with pulse basis and point testing.

Time convention is exp(+j*omega*t); the kernel is the outgoing Hankel
function H0^(2). Lengths are in wavelengths.
"""

from dataclasses import dataclass
import math

import numpy as np

from .special import EULER_GAMMA, hankel0_2

ETA0 = 376.730313668
WAVENUMBER = 2.0 * math.pi
GAMMA_E = math.exp(EULER_GAMMA)  # 1.7810724...
NEAR_FACTOR = 10.0

_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)


@dataclass(frozen=True)
class PhysicalConstants:
    k: float = WAVENUMBER
    eta0: float = ETA0


@dataclass(frozen=True)
class Excitation:
    """Plane wave arriving from direction ``incidence_angle`` (radians)."""

    incidence_angle: float

    def __post_init__(self):
        if not math.isfinite(self.incidence_angle):
            raise ValueError("incidence angle must be finite")


class ImpedanceKernel:
    """Vectorized evaluator for entries of the impedance matrix.

    Entry ``(i, j)`` is the field at midpoint ``i`` radiated by a unit pulse
    on segment ``j``. Self terms use the small-argument closed form; source
    segments closer than ``NEAR_FACTOR`` lengths get 4-point Gauss-Legendre;
    everything else is a one-point midpoint rule.
    """

    def __init__(self, mesh, constants=PhysicalConstants()):
        self.mesh = mesh
        self.k = constants.k
        self.eta0 = constants.eta0
        self.scale = self.k * self.eta0 / 4.0
        self.mid = mesh.midpoints
        self.length = mesh.lengths
        d = mesh.ends - mesh.starts
        # Gauss points: (N, 4, 2), weights already scaled by half-length
        self.gauss_pts = (mesh.starts[:, None, :]
                          + 0.5 * (1.0 + _GL_X)[None, :, None] * d[:, None, :])
        self.gauss_w = 0.5 * self.length[:, None] * _GL_W[None, :]
        kd = self.k * self.length
        self.self_terms = self.scale * self.length * (
            1.0 - 1j * (2.0 / math.pi) * (np.log(GAMMA_E * kd / 4.0) - 1.0))

    @property
    def n(self):
        return len(self.length)

    def block(self, rows, cols):
        """Dense sub-block ``Z[rows][:, cols]`` for index arrays or slices."""
        rows = np.arange(self.n)[rows] if isinstance(rows, slice) else np.asarray(rows)
        cols = np.arange(self.n)[cols] if isinstance(cols, slice) else np.asarray(cols)
        pr = self.mid[rows]
        pc = self.mid[cols]
        dx = pr[:, None, 0] - pc[None, :, 0]
        dy = pr[:, None, 1] - pc[None, :, 1]
        dist = np.sqrt(dx * dx + dy * dy)
        same = rows[:, None] == cols[None, :]
        coincident = (dist == 0.0) & ~same
        if coincident.any():
            raise ValueError("distinct segments share a midpoint")
        lc = self.length[cols]
        near = dist < NEAR_FACTOR * lc[None, :]
        far = ~near
        out = np.empty(dist.shape, dtype=complex)
        if far.any():
            out[far] = hankel0_2(self.k * dist[far]) * np.broadcast_to(lc, dist.shape)[far]
        near_off = near & ~same
        if near_off.any():
            ii, jj = np.nonzero(near_off)
            gi = rows[ii]
            gj = cols[jj]
            diff = self.mid[gi][:, None, :] - self.gauss_pts[gj]
            r = np.hypot(diff[..., 0], diff[..., 1])
            out[ii, jj] = np.sum(self.gauss_w[gj] * hankel0_2(self.k * r), axis=1)
        out *= self.scale
        if same.any():
            ii, jj = np.nonzero(same)
            out[ii, jj] = self.self_terms[rows[ii]]
        return out

    def entry(self, i, j):
        return complex(self.block(np.array([i]), np.array([j]))[0, 0])


def z_entry(i, j, segments):
    """Single impedance-matrix entry (convenience; builds a kernel)."""
    return ImpedanceKernel(_as_mesh(segments)).entry(i, j)


def assemble_dense_block(row_range, col_range, segments):
    """Dense ``Z[row_range, col_range]``; ranges are ``(start, stop)`` pairs."""
    kernel = segments if isinstance(segments, ImpedanceKernel) else ImpedanceKernel(_as_mesh(segments))
    return kernel.block(np.arange(*row_range), np.arange(*col_range))


def assemble_rhs(excitation, segments, k=WAVENUMBER):
    """Point-tested incident field ``exp(+jk(x cos phi + y sin phi))``."""
    mid = _as_mesh(segments).midpoints
    phi = excitation.incidence_angle if isinstance(excitation, Excitation) else float(excitation)
    return np.exp(1j * k * (mid[:, 0] * math.cos(phi) + mid[:, 1] * math.sin(phi)))


def rcs(currents, segments, angles, k=WAVENUMBER, eta0=ETA0, chunk=512):
    """Echo width ``10*log10(sigma/lambda0)`` at each observation angle.

    ``angles`` are in radians. ``currents`` may be a vector, or an
    ``(N, len(angles))`` array holding one solution per angle (monostatic).
    """
    mesh = _as_mesh(segments)
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    currents = np.asarray(currents)
    if currents.shape[0] != len(mesh):
        raise ValueError("current vector length does not match the mesh")
    weighted = currents * (mesh.lengths if currents.ndim == 1 else mesh.lengths[:, None])
    x, y = mesh.midpoints[:, 0], mesh.midpoints[:, 1]
    sums = np.empty(len(angles), dtype=complex)
    for a in range(0, len(angles), chunk):
        phi = angles[a:a + chunk]
        phase = np.exp(1j * k * (np.outer(np.cos(phi), x) + np.outer(np.sin(phi), y)))
        if currents.ndim == 1:
            sums[a:a + chunk] = phase @ weighted
        else:
            sums[a:a + chunk] = np.einsum("an,na->a", phase, weighted[:, a:a + chunk])
    sigma = (k * eta0 ** 2 / 4.0) * np.abs(sums) ** 2
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(sigma)


def _as_mesh(segments):
    from .geometry import Mesh

    if isinstance(segments, ImpedanceKernel):
        return segments.mesh
    if isinstance(segments, Mesh):
        return segments
    return Mesh.from_segments(list(segments))
