import numpy as np
import pytest

from bfdirect.efie import ImpedanceKernel
from bfdirect.geometry import CurveSpec, build_mesh
from bfdirect.partition import build_tree


def make_problem(kind, size, levels, period=0.0, depth=0.0, seg_len=0.05):
    mesh, corners = build_mesh(CurveSpec(kind, size, period, depth), seg_len)
    tree = build_tree(mesh, corners, levels, min_leaf=1)
    return mesh, tree, ImpedanceKernel(mesh)


def cgauss(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def circle16():
    return make_problem("circle", 16.0, 4)


@pytest.fixture(scope="session")
def circle16_dense(circle16):
    mesh, tree, kernel = circle16
    return kernel.block(slice(None), slice(None))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
