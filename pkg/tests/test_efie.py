import math

import numpy as np
import pytest
import scipy.integrate
import scipy.special

from bfdirect.efie import (ETA0, WAVENUMBER, Excitation, ImpedanceKernel, assemble_dense_block,
                           assemble_rhs, rcs, z_entry)
from bfdirect.geometry import CurveSpec, Mesh, build_mesh
from bfdirect.linalg import lu_solve

from conftest import make_problem


def line_mesh(xs, y=0.0, d=0.05):
    starts = [(x - d / 2, y) for x in xs]
    ends = [(x + d / 2, y) for x in xs]
    return Mesh(starts, ends)


def _self_reference(d):
    k = WAVENUMBER
    re = scipy.integrate.quad(lambda t: scipy.special.jv(0, k * t), 0, d / 2)[0]
    im = scipy.integrate.quad(lambda t: -scipy.special.yv(0, k * t), 0, d / 2, limit=200)[0]
    return (k * ETA0 / 4) * 2 * (re + 1j * im)


@pytest.mark.xfail(strict=True, reason="closed-form self term drops O((k*d)**2) terms: "
                                       "2.2e-3 relative at d = 0.05")
def test_self_term_within_1e3_of_quadrature():
    mesh = line_mesh([0.0], d=0.05)
    ref = _self_reference(0.05)
    assert abs(z_entry(0, 0, mesh) - ref) / abs(ref) <= 1e-3


@pytest.mark.parametrize("d", [0.01, 0.025, 0.05, 0.1])
def test_self_term_truncation_order(d):
    mesh = line_mesh([0.0], d=d)
    z = z_entry(0, 0, mesh)
    ref = _self_reference(d)
    # the neglected terms are of relative size (k d)^2 / 48 times a log factor
    bound = (WAVENUMBER * d) ** 2 / 48 * 1.2
    assert abs(z - ref) / abs(ref) <= bound
    assert z.real > 0 and z.imag > 0


def test_near_entry_against_quadrature():
    mesh = line_mesh([0.0, 0.12])
    k = WAVENUMBER
    f = lambda t: scipy.special.hankel2(0, k * abs(0.12 - t))
    re = scipy.integrate.quad(lambda t: f(t).real, -0.025, 0.025)[0]
    im = scipy.integrate.quad(lambda t: f(t).imag, -0.025, 0.025)[0]
    ref = (k * ETA0 / 4) * (re + 1j * im)
    assert abs(z_entry(1, 0, mesh) - ref) / abs(ref) < 1e-6


def test_far_midpoint_rule_and_symmetry():
    # power-of-two lengths keep both segments exactly equal in floating point
    mesh = line_mesh([0.0, 1.0, 4.0], d=0.0625)
    k = WAVENUMBER
    ref = (k * ETA0 / 4) * 0.0625 * scipy.special.hankel2(0, k * 1.0)
    assert abs(z_entry(1, 0, mesh) - ref) / abs(ref) < 1e-9
    assert z_entry(0, 1, mesh) == z_entry(1, 0, mesh)


def test_far_decay():
    mesh = line_mesh([0.0, 2.0, 8.0])
    ratio = abs(z_entry(0, 2, mesh)) / abs(z_entry(0, 1, mesh))
    assert abs(ratio - 0.5) < 0.05


def test_coincident_midpoints_rejected():
    mesh = Mesh([(0.0, 0.0), (0.0, -0.01)], [(0.0, 0.01), (0.0, 0.02)])
    with pytest.raises(ValueError):
        z_entry(0, 1, mesh)


def test_block_equals_entries():
    mesh, _ = build_mesh(CurveSpec("circle", 0.5))
    n = len(mesh)
    assert n == 63
    kernel = ImpedanceKernel(mesh)
    full = assemble_dense_block((0, n), (0, n), kernel)
    ref = np.array([[kernel.entry(i, j) for j in range(n)] for i in range(n)])
    assert np.array_equal(full, ref)
    assert assemble_dense_block((5, 6), (5, 6), mesh)[0, 0] == z_entry(5, 5, mesh)


def test_reciprocity_far(circle16):
    mesh, tree, kernel = circle16
    idx = np.arange(0, len(mesh), 37)
    z = kernel.block(idx, idx)
    d = np.linalg.norm(mesh.midpoints[idx, None] - mesh.midpoints[None, idx], axis=-1)
    same_len = np.isclose(mesh.lengths[idx, None], mesh.lengths[None, idx], rtol=0, atol=0)
    far = (d >= 10 * mesh.lengths[idx].max()) & same_len
    assert far.any()
    assert np.array_equal(z[far], z.T[far])


def test_leaf_lu_residual(rng):
    mesh, tree, kernel = make_problem("smooth_semicircle", 10.0, 2)
    lo, hi = tree.node(2, 1)
    z = kernel.block(np.arange(lo, hi), np.arange(lo, hi))
    b = rng.standard_normal((hi - lo, 3)) + 0j
    x = lu_solve(z, b)
    assert np.linalg.norm(z @ x - b) / np.linalg.norm(b) <= 1e-10


def test_rhs():
    mesh = Mesh([(-0.025, 0.0), (0.225, 0.3)], [(0.025, 0.0), (0.275, 0.3)])
    v = assemble_rhs(Excitation(0.0), mesh)
    assert v[0] == 1 + 0j
    assert abs(v[1] - 1j) < 1e-12
    circle, _ = build_mesh(CurveSpec("circle", 3.0))
    assert np.allclose(np.abs(assemble_rhs(Excitation(1.1), circle)), 1.0)
    with pytest.raises(ValueError):
        Excitation(float("nan"))


def test_rcs_single_segment_isotropic():
    mesh = line_mesh([0.0])
    vals = rcs(np.array([1.0 + 0j]), mesh, np.linspace(0, 2 * np.pi, 17))
    expect = 10 * math.log10(WAVENUMBER * ETA0 ** 2 / 4 * 0.05 ** 2)
    assert np.allclose(vals, expect, atol=1e-12)


def test_rcs_mirror_symmetry():
    mesh, _ = build_mesh(CurveSpec("smooth_semicircle", 3.0))
    kernel = ImpedanceKernel(mesh)
    z = kernel.block(slice(None), slice(None))
    cur = np.linalg.solve(z, assemble_rhs(Excitation(0.0), mesh))
    phi = np.radians(np.linspace(1, 179, 40))
    assert np.max(np.abs(rcs(cur, mesh, phi) - rcs(cur, mesh, -phi))) < 1e-6


def test_rcs_monostatic_matrix_matches_columns():
    mesh, _ = build_mesh(CurveSpec("circle", 1.0))
    rng = np.random.default_rng(0)
    cur = rng.standard_normal((len(mesh), 5)) + 1j * rng.standard_normal((len(mesh), 5))
    phi = np.linspace(0, 1, 5)
    got = rcs(cur, mesh, phi, chunk=2)
    ref = [rcs(cur[:, a], mesh, phi[a:a + 1])[0] for a in range(5)]
    assert np.allclose(got, ref)
