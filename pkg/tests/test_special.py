import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bfdirect.special import (SERIES_CUTOFF, bessel_j0_y0, bessel_j1_y1, bessel_jy_orders,
                              hankel0_2)

mpmath.mp.dps = 30


def mp_h0(x):
    return complex(mpmath.besselj(0, x) - 1j * mpmath.bessely(0, x))


def test_value_at_one():
    h = hankel0_2(1.0)
    ref = 0.7651976866 - 0.0882569642j
    assert abs(h - ref) / abs(ref) < 1e-9


@pytest.mark.parametrize("x", [0.0, -1.0])
def test_domain(x):
    with pytest.raises(ValueError):
        hankel0_2(x)


def test_large_argument_magnitude():
    assert abs(abs(hankel0_2(100.0)) - np.sqrt(2 / (100 * np.pi))) / 0.0797885 < 3e-3


@pytest.mark.parametrize("x", [1e-6, 0.01, 0.3, 1.0, 4.0, 7.9, 8.0, 11.99, 12.0, 12.01,
                               20.0, 150.0, 3000.0, 1e5])
def test_hankel_matches_high_precision(x):
    assert abs(hankel0_2(x) - mp_h0(x)) / abs(mp_h0(x)) < 1e-10


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=1e-3, max_value=1e5))
def test_hankel_property(x):
    assert abs(hankel0_2(x) - mp_h0(x)) / abs(mp_h0(x)) < 1e-9


@pytest.mark.parametrize("x", [0.5, 5.0, 50.0])
def test_wronskian(x):
    (j0,), (y0,) = bessel_j0_y0(np.array([x]))
    (j1,), (y1,) = bessel_j1_y1(np.array([x]))
    # J0' = -J1, Y0' = -Y1
    w = j0 * (-y1) - (-j1) * y0
    assert abs(w - 2 / (np.pi * x)) / (2 / (np.pi * x)) < 1e-8


def test_order_one_matches_mpmath():
    for x in (0.2, 3.0, SERIES_CUTOFF, 40.0):
        (j1,), (y1,) = bessel_j1_y1(np.array([x]))
        assert abs(j1 - float(mpmath.besselj(1, x))) < 1e-11
        assert abs(y1 - float(mpmath.bessely(1, x))) / abs(float(mpmath.bessely(1, x))) < 1e-9


@pytest.mark.parametrize("x", [2.0, 31.4159, 100.53])
def test_higher_orders(x):
    m = int(x + 12 * x ** (1 / 3) + 10)
    j, y = bessel_jy_orders(m, x)
    for order in range(0, m + 1, 7):
        jr = float(mpmath.besselj(order, x))
        yr = float(mpmath.bessely(order, x))
        assert abs(j[order] - jr) <= 1e-9 * max(abs(jr), 1e-3 * np.max(np.abs(j)))
        assert abs(y[order] - yr) <= 1e-8 * abs(yr)
