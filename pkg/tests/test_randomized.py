import math

import numpy as np
import pytest

from bfdirect.butterfly import ButterflyMatrix, compress_block, zero_butterfly
from bfdirect.randomized import (RankOverflowError, SketchConfig, estimate_rank, make_aux,
                                 reconstruct, structured_probe, verification_error)

from conftest import cgauss, make_problem
from test_butterfly import random_butterfly


def exact_butterfly(seed, V=4, r=8, blk=64):
    return random_butterfly(V, r, blk, np.random.default_rng(seed))


def recon(bf, cfg, tol=1e-10):
    return reconstruct(bf.matmat, bf.rmatmat, bf.row_sizes, bf.col_sizes, bf.levels, cfg, tol=tol)


def fresh_error(bf, out, seed):
    x = cgauss(np.random.default_rng(seed), (bf.shape[1], 3))
    ref = bf.matmat(x)
    return np.max(np.linalg.norm(out.matmat(x) - ref, axis=0) / np.linalg.norm(ref, axis=0))


def test_sketch_config():
    assert SketchConfig(r=8).p == 18
    with pytest.raises(ValueError):
        SketchConfig(r=8, p=8)
    with pytest.raises(ValueError):
        SketchConfig(r=0)


def test_make_aux():
    a = make_aux([8, 8], [8, 8], 1, 3, seed=5)
    b = make_aux([8, 8], [8, 8], 1, 3, seed=5)
    assert all(np.array_equal(x, y) for x, y in zip(a.right, b.right))
    assert all(np.array_equal(x, y) for x, y in zip(a.kernels[0], b.kernels[0]))
    assert a.right[0].shape == (3, 8) and a.kernels[0][0].shape == (6, 6)
    big = make_aux([100] * 4, [100] * 4, 2, 25, seed=1)
    vals = np.concatenate([b.ravel() for b in big.right])
    assert vals.size >= 10_000
    assert 0.95 <= np.mean(np.abs(vals) ** 2) <= 1.05
    assert abs(np.mean(vals.real ** 2) - 0.5) < 0.03


def test_structured_probe():
    full = structured_probe("col", (0, 16), 16, 4, seed=0)
    assert np.all(full != 0)
    part = structured_probe("row", (4, 8), 16, 5, seed=0)
    assert part.shape == (5, 16)
    assert not np.any(part[:, :4]) and not np.any(part[:, 8:])
    assert np.all(part[:, 4:8] != 0)
    a = structured_probe("col", (0, 10), 20, 1000, seed=1)[:10]
    b = structured_probe("col", (10, 20), 20, 1000, seed=2)[10:]
    cov = np.abs(a @ b.conj().T / 1000)
    assert cov.max() <= 0.1
    with pytest.raises(ValueError):
        structured_probe("col", (3, 3), 10, 2, 0)
    with pytest.raises(ValueError):
        structured_probe("diag", (0, 3), 10, 2, 0)


def test_zero_operator():
    z = zero_butterfly([16] * 4, [16] * 4)
    out = recon(z, SketchConfig(r=4), tol=1e-4)
    assert out.rank_stats()[0] == 0
    assert out.verify_error == 0


@pytest.mark.parametrize("seed", range(5))
def test_exact_rank_recovery(seed):
    bf = exact_butterfly(seed)
    out = recon(bf, SketchConfig(r=8, p=18, seed=seed))
    assert out.rank_stats()[0] <= 8
    assert fresh_error(bf, out, 1000 + seed) <= 1e-8


@pytest.mark.parametrize("V", [0, 1, 2, 3, 5])
def test_exact_recovery_all_depths(V):
    bf = random_butterfly(V, 3, 10, np.random.default_rng(V), ragged=True)
    out = recon(bf, SketchConfig(r=3, seed=V))
    assert fresh_error(bf, out, 7) <= 1e-8


def test_deterministic():
    bf = exact_butterfly(3, V=3, blk=32)
    a = recon(bf, SketchConfig(r=8, seed=11))
    b = recon(bf, SketchConfig(r=8, seed=11))
    for x, y in zip(a.right + a.left, b.right + b.left):
        assert np.array_equal(x, y)


def test_retry_doubles_rank_and_overflow():
    bf = exact_butterfly(4, V=3, r=8, blk=32)
    out = recon(bf, SketchConfig(r=2, seed=1, max_retries=3))
    assert fresh_error(bf, out, 3) <= 1e-8
    with pytest.raises(RankOverflowError) as info:
        recon(bf, SketchConfig(r=2, seed=1, max_retries=0))
    assert info.value.last_error > 10 * 1e-10


def test_estimate_rank():
    def with_rank(r):
        rng = np.random.default_rng(r)
        return ButterflyMatrix([20], [20], [cgauss(rng, (r, 20))], [], [cgauss(rng, (20, r))])

    assert estimate_rank([with_rank(12)]) == 16
    assert estimate_rank([zero_butterfly([4], [4])]) == 4
    assert estimate_rank([with_rank(12), with_rank(20), with_rank(17)]) == 24
    with pytest.raises(ValueError):
        estimate_rank([])


def test_efie_sibling_block_black_box():
    radius = 2048 * 0.05 / (2 * math.pi) - 1e-9
    mesh, tree, kernel = make_problem("circle", radius, 4)
    assert len(mesh) == 2048
    lo, hi = tree.node(1, 0)
    c0, c1 = tree.node(1, 1)
    dense = kernel.block(np.arange(lo, hi), np.arange(c0, c1))
    sizes_r, sizes_c = tree.leaf_sizes(1, 0), tree.leaf_sizes(1, 1)
    tol = 1e-4
    fwd = compress_block(kernel.block, (1, 0), (1, 1), tree, tol)
    out = reconstruct(lambda x: dense @ x, lambda y: dense.T @ y, sizes_r, sizes_c, 3,
                      SketchConfig(r=estimate_rank([fwd]), seed=2), tol=tol)
    assert out.verify_error <= 10 * tol
    rng = np.random.default_rng(9)
    x = cgauss(rng, (c1 - c0, 10))
    err = np.linalg.norm(out.matmat(x) - dense @ x, axis=0) / np.linalg.norm(dense @ x, axis=0)
    assert err.max() <= 1e-3
    assert verification_error(lambda v: dense @ v, out, seed=5) <= 1e-3
