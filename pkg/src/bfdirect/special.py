"""Cylinder functions of integer order.

Orders 0 and 1 are evaluated with ascending power series for small
arguments and Hankel's asymptotic expansion above ``SERIES_CUTOFF``.
Higher orders (needed only by the circular-cylinder series solution) come
from Miller's downward recurrence for J and upward recurrence for Y.
"""

import math

import numpy as np

EULER_GAMMA = 0.57721566490153286061
SERIES_CUTOFF = 12.0

# asymptotic series truncation: the smallest term sits near k = 2x, so 24
# terms reach ~1e-11 relative at the cutoff and much better above it
_ASYMPTOTIC_TERMS = 24


def _asymptotic_coeffs(order):
    mu = 4.0 * order * order
    coeffs = [1.0]
    for k in range(1, _ASYMPTOTIC_TERMS + 1):
        coeffs.append(coeffs[-1] * (mu - (2 * k - 1) ** 2) / (k * 8.0))
    return np.array(coeffs)


_COEFFS = {0: _asymptotic_coeffs(0), 1: _asymptotic_coeffs(1)}


def _asymptotic(x, order):
    a = _COEFFS[order]
    inv = 1.0 / x
    inv2 = inv * inv
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    # Horner in 1/x^2 for P (even k) and Q (odd k), alternating signs
    even = a[0::2]
    odd = a[1::2]
    for k in range(len(even) - 1, -1, -1):
        p = p * inv2 + ((-1) ** k) * even[k]
    for k in range(len(odd) - 1, -1, -1):
        q = q * inv2 + ((-1) ** k) * odd[k]
    q = q * inv
    chi = x - (0.5 * order + 0.25) * math.pi
    scale = np.sqrt(2.0 / (math.pi * x))
    c, s = np.cos(chi), np.sin(chi)
    return scale * (p * c - q * s), scale * (p * s + q * c)


def _series_order0(x):
    quarter = 0.25 * x * x
    term = np.ones_like(x)
    j0 = np.ones_like(x)
    harmonic = 0.0
    ysum = np.zeros_like(x)
    for k in range(1, 80):
        term = term * (-quarter) / (k * k)
        harmonic += 1.0 / k
        j0 = j0 + term
        ysum = ysum - harmonic * term
        if np.max(np.abs(term), initial=0.0) * harmonic < 1e-18:
            break
    y0 = (2.0 / math.pi) * ((np.log(0.5 * x) + EULER_GAMMA) * j0 + ysum)
    return j0, y0


def _series_order1(x):
    quarter = 0.25 * x * x
    term = 0.5 * x
    j1 = term.copy()
    h_k, h_k1 = 0.0, 1.0
    ysum = term * (h_k + h_k1)
    for k in range(1, 80):
        term = term * (-quarter) / (k * (k + 1))
        h_k = h_k1
        h_k1 = h_k + 1.0 / (k + 1)
        j1 = j1 + term
        ysum = ysum + term * (h_k + h_k1)
        if np.max(np.abs(term), initial=0.0) * h_k1 < 1e-18:
            break
    y1 = ((2.0 / math.pi) * (np.log(0.5 * x) + EULER_GAMMA) * j1
          - 2.0 / (math.pi * x) - ysum / math.pi)
    return j1, y1


def _evaluate(x, order):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise ValueError("cylinder functions require x > 0")
    flat = x.ravel()
    j = np.empty_like(flat)
    y = np.empty_like(flat)
    small = flat <= SERIES_CUTOFF
    series = _series_order0 if order == 0 else _series_order1
    if small.any():
        j[small], y[small] = series(flat[small])
    if (~small).any():
        j[~small], y[~small] = _asymptotic(flat[~small], order)
    return j.reshape(x.shape), y.reshape(x.shape)


def bessel_j0_y0(x):
    """Return ``(J0(x), Y0(x))`` for positive ``x`` (scalar or array)."""
    return _evaluate(x, 0)


def bessel_j1_y1(x):
    """Return ``(J1(x), Y1(x))`` for positive ``x`` (scalar or array)."""
    return _evaluate(x, 1)


def hankel0_2(x):
    """Zeroth-order Hankel function of the second kind, ``J0 - jY0``.

    Accurate to better than 1e-10 relative over (0, 1e5]. Raises
    ``ValueError`` for ``x <= 0`` (logarithmic singularity at the origin).
    """
    j0, y0 = bessel_j0_y0(x)
    return j0 - 1j * y0


def bessel_jy_orders(max_order, x):
    """``J_m(x)`` and ``Y_m(x)`` for ``m = 0..max_order`` at one ``x > 0``.

    J uses Miller's backward recurrence normalized by
    ``J0 + 2*sum(J_2k) = 1``; Y uses forward recurrence from Y0, Y1,
    which is stable in that direction.
    """
    x = float(x)
    if x <= 0:
        raise ValueError("x must be positive")
    (j0,), (y0,) = bessel_j0_y0(np.array([x]))
    (_,), (y1,) = bessel_j1_y1(np.array([x]))

    start = int(max(max_order, x)) + 20 + int(math.sqrt(40 * max(max_order, x)))
    start += start % 2
    vals = np.zeros(start + 2)
    vals[start] = 1e-300
    norm = 0.0
    for m in range(start, 0, -1):
        vals[m - 1] = (2.0 * m / x) * vals[m] - vals[m + 1]
        if abs(vals[m - 1]) > 1e250:
            vals[m - 1:] *= 1e-250
            norm *= 1e-250
        if (m - 1) % 2 == 0 and m - 1 > 0:
            norm += 2.0 * vals[m - 1]
    norm += vals[0]
    jm = vals[:max_order + 1] / norm
    # the normalization sum suffers cancellation near zeros of J0; anchor to
    # the directly evaluated J0 when it is not small
    if abs(j0) > 1e-3 and abs(jm[0]) > 0:
        jm = jm * (j0 / jm[0])

    ym = np.empty(max_order + 1)
    ym[0] = y0
    if max_order >= 1:
        ym[1] = y1
    for m in range(1, max_order):
        ym[m + 1] = (2.0 * m / x) * ym[m] - ym[m - 1]
    return jm, ym
