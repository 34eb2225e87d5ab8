"""Hierarchical direct solver built from identity-plus-butterfly factors.

With the tree's diagonal blocks written as

    Z_parent = diag(Z_{2k}, Z_{2k+1}) @ (I + [[0, Bbar_{2k}], [Bbar_{2k+1}, 0]])

where ``Bbar_k = Z_k^{-1} B_k`` (``B_k`` the sibling block with rows of
``k``), the whole matrix factors as ``Z = Zbar_L @ Zbar_{L-1} @ ... @ Zbar_0``.
``Zbar_L`` is the block diagonal of leaves and ``Zbar_{l-1}`` collects the
identity-plus-sibling blocks of level ``l``. Each ``(I + B)^{-1}`` is kept
as ``I + Bbar`` with ``Bbar`` a butterfly.
"""

from dataclasses import dataclass, field, replace
import logging

import numpy as np

from .butterfly import ButterflyMatrix, low_rank_butterfly, zero_butterfly
from .linalg import LUFactor, SingularMatrixError
from .linop import LinearOp, aslinop, block_2x2, combination, identity_plus, product, restrict
from .randomized import RANK_MARGIN, SketchConfig, estimate_rank, gaussian, reconstruct

logger = logging.getLogger(__name__)

RESIDUAL_PROBES = 3


def _derive(seed, *tags):
    return int(np.random.SeedSequence([int(seed)] + [int(t) for t in tags]).generate_state(1)[0])


def _is_zero(q):
    if q is None:
        return True
    if isinstance(q, ButterflyMatrix):
        return q.rank_stats()[0] == 0
    return not np.any(q)


def _sizes_of(q, side):
    return q.row_sizes if side == 0 else q.col_sizes


class RankMemory:
    """Largest rank reconstructed so far at each butterfly depth.

    Inverse ranks grow with depth, so the constituent estimate alone
    undershoots near the root and every miss costs a full retry.
    """

    GROWTH = 1.3

    def __init__(self):
        self.seen = {}

    def suggest(self, V):
        if V in self.seen:
            return self.seen[V] + RANK_MARGIN
        if V - 1 in self.seen:
            return int(np.ceil(self.GROWTH * self.seen[V - 1])) + RANK_MARGIN
        return 0

    def record(self, V, bf):
        self.seen[V] = max(self.seen.get(V, 0), int(bf.rank_stats()[0]))


def _config(cfg, constituents, seed, dense_rank=0, V=None, memory=None):
    bfs = [c for c in constituents if isinstance(c, ButterflyMatrix)]
    r = max(cfg.r, estimate_rank(bfs) if bfs else cfg.r, dense_rank)
    if memory is not None and V is not None:
        r = max(r, memory.suggest(V))
    return replace(cfg, r=r, p=r + cfg.oversampling, seed=seed)


def _reconstruct(op, row_sizes, col_sizes, V, tol, cfg, memory=None):
    out = reconstruct(op.matmat, op.rmatmat, row_sizes, col_sizes, V, cfg, tol=tol)
    if memory is not None:
        memory.record(V, out)
    return out


def _numerical_rank(quads, tol):
    """Largest numerical rank among dense (ndarray) quadrants."""
    ranks = [np.linalg.matrix_rank(q, tol=tol * np.linalg.norm(q, 2)) for q in quads
             if isinstance(q, np.ndarray) and q.size and np.any(q)]
    return int(max(ranks, default=0))


def _rebuild(op, row_sizes, col_sizes, V, tol, cfg, memory=None):
    if op is None:
        return None
    out = _reconstruct(aslinop(op), row_sizes, col_sizes, V, tol, cfg, memory)
    return None if out.rank_stats()[0] == 0 else out


def _split_sizes(sizes):
    half = len(sizes) // 2
    return np.asarray(sizes[:half]), np.asarray(sizes[half:])


def invert_plus_identity(op, sizes, V, tol, cfg, seed=0, memory=None):
    """``Bbar`` with ``(I + op)^{-1} = I + Bbar`` for a ``V``-level operator.

    ``V == 0`` is solved densely and returns an ndarray. Otherwise the
    quadrants of ``op`` are reconstructed as ``(V-1)``-level butterflies and
    handed to :func:`invert_ipb`. ``None`` stands for zero.
    """
    if op is None or _is_zero(op):
        return None
    sizes = np.asarray(sizes, dtype=int)
    n = int(sizes.sum())
    if V == 0:
        op = aslinop(op)
        m = op.matmat(np.eye(n, dtype=complex))
        lu = LUFactor(np.eye(n) + m)
        return lu.solve(np.eye(n, dtype=complex)) - np.eye(n)
    s1, s2 = _split_sizes(sizes)
    n1 = int(s1.sum())
    cut = ((0, n1), (n1, n))
    if isinstance(op, np.ndarray):
        quads = [[op[:n1, :n1], op[:n1, n1:]], [op[n1:, :n1], op[n1:, n1:]]]
        return invert_ipb(quads, V, tol, cfg, sizes=(s1, s2), seed=_derive(seed, 12), memory=memory)
    quads = [[None, None], [None, None]]
    for a in range(2):
        for b in range(2):
            sub = restrict(op, cut[a], cut[b])
            c = _config(cfg, [op], _derive(seed, 11, a, b))
            quads[a][b] = _rebuild(sub, (s1, s2)[a], (s1, s2)[b], V - 1, tol, c)
    return invert_ipb(quads, V, tol, cfg, sizes=(s1, s2), seed=_derive(seed, 12), memory=memory)


def invert_ipb(quadrants, V_plus_1, tol, cfg, sizes=None, seed=0, memory=None):
    """Invert ``I + [[B11, B12], [B21, B22]]`` as ``I + Bbar``.

    Quadrants are butterflies, ndarrays or ``None`` (zero), each acting on
    ``2**(V_plus_1 - 1)`` finest blocks per side. ``B22`` is inverted first,
    then the Schur complement ``B11 - B12 (I + Bbar22) B21``; the inverse
    is assembled as lower-triangular times block-diagonal times
    upper-triangular and reconstructed as a ``V_plus_1``-level butterfly.
    """
    (b11, b12), (b21, b22) = quadrants
    V = V_plus_1 - 1
    if V < 0:
        raise ValueError("V_plus_1 must be at least 1")
    if sizes is None:
        s1 = next((_sizes_of(q, 0) for q in (b11, b12) if isinstance(q, ButterflyMatrix)), None)
        if s1 is None:
            s1 = next((_sizes_of(q, 1) for q in (b11, b21) if isinstance(q, ButterflyMatrix)), None)
        s2 = next((_sizes_of(q, 0) for q in (b21, b22) if isinstance(q, ButterflyMatrix)), None)
        if s2 is None:
            s2 = next((_sizes_of(q, 1) for q in (b12, b22) if isinstance(q, ButterflyMatrix)), None)
        if s1 is None or s2 is None:
            raise ValueError("sizes are required when quadrants carry no block structure")
        sizes = (s1, s2)
    s1, s2 = (np.asarray(s, dtype=int) for s in sizes)
    if len(s1) != 1 << V or len(s2) != 1 << V:
        raise ValueError("quadrant sizes do not match V_plus_1")
    n1, n2 = int(s1.sum()), int(s2.sum())
    b11, b12, b21, b22 = (None if _is_zero(q) else q for q in (b11, b12, b21, b22))
    all_sizes = np.concatenate((s1, s2))
    if b11 is None and b12 is None and b21 is None and b22 is None:
        return zero_butterfly(all_sizes, all_sizes)

    # dense inputs carry no rank information, so their numerical rank seeds the sketch
    dense_rank = _numerical_rank((b11, b12, b21, b22), tol)
    bar22 = invert_plus_identity(b22, s2, V, tol, cfg, seed=_derive(seed, 1), memory=memory)
    d_inv = identity_plus(bar22, n2)
    coupling = product(b12, d_inv, b21)
    schur_op = combination([(1.0, b11), (-1.0, coupling)], (n1, n1))
    if schur_op is not None and V > 0:
        c = _config(cfg, [b11, b12, b21, bar22], _derive(seed, 2), dense_rank, V, memory)
        schur = _rebuild(schur_op, s1, s1, V, tol, c, memory)
    else:
        schur = schur_op
    bar11 = invert_plus_identity(schur, s1, V, tol, cfg, seed=_derive(seed, 3), memory=memory)
    s_inv = identity_plus(bar11, n1)

    eye1, eye2 = identity_plus(None, n1), identity_plus(None, n2)
    lower = block_2x2([[eye1, None], [combination([(-1.0, product(d_inv, b21))], (n2, n1)), eye2]],
                      (n1, n2), (n1, n2))
    diag = block_2x2([[s_inv, None], [None, d_inv]], (n1, n2), (n1, n2))
    upper = block_2x2([[eye1, combination([(-1.0, product(b12, d_inv))], (n1, n2))], [None, eye2]],
                      (n1, n2), (n1, n2))
    n = n1 + n2
    inverse_minus_i = combination([(1.0, product(lower, diag, upper)),
                                   (-1.0, identity_plus(None, n))], (n, n))
    c = _config(cfg, [b11, b12, b21, b22, bar11, bar22, schur], _derive(seed, 4),
                dense_rank + RANK_MARGIN, V_plus_1, memory)
    return _reconstruct(inverse_minus_i, all_sizes, all_sizes, V_plus_1, tol, c, memory)


# ----------------------------------------------------------------------
# factored operator
# ----------------------------------------------------------------------
@dataclass
class FactoredOperator:
    """``Z^{-1}`` as leaf LU factors plus one ``I + Bbar`` per internal node.

    ``partial_scattering[l-1][k]`` is ``Bbar_k`` of level ``l``;
    ``factor_inverses[l][k]`` inverts the identity-plus block of node
    ``(l, k)`` (``None`` means the block is the identity).
    """

    tree: object
    tol: float
    leaf_inverses: list
    partial_scattering: list
    factor_inverses: list
    smw_residuals: list = field(default_factory=list)

    @property
    def n(self):
        return self.tree.n

    @property
    def shape(self):
        return self.n, self.n

    def _leaf_solve(self, x, lo_leaf, hi_leaf, base, trans):
        L = self.tree.levels
        out = np.empty_like(x)
        for k in range(lo_leaf, hi_leaf):
            lo, hi = self.tree.node(L, k)
            out[lo - base:hi - base] = self.leaf_inverses[k].solve(x[lo - base:hi - base], trans=trans)
        return out

    def _factor_apply(self, x, level, k_lo, k_hi, base, trans):
        for k in range(k_lo, k_hi):
            bbar = self.factor_inverses[level][k]
            if bbar is None:
                continue
            lo, hi = self.tree.node(level, k)
            seg = x[lo - base:hi - base]
            seg += bbar.rmatmat(seg) if trans else bbar.matmat(seg)
        return x

    def solve_node(self, x, level, k, trans=False):
        """Apply the inverse of diagonal block ``(level, k)`` (transposed if asked)."""
        L = self.tree.levels
        base, _ = self.tree.node(level, k)
        x = np.array(x, dtype=complex)
        span = L - level
        if not trans:
            x = self._leaf_solve(x, k << span, (k + 1) << span, base, False)
            for lev in range(L - 1, level - 1, -1):
                d = lev - level
                x = self._factor_apply(x, lev, k << d, (k + 1) << d, base, False)
            return x
        for lev in range(level, L):
            d = lev - level
            x = self._factor_apply(x, lev, k << d, (k + 1) << d, base, True)
        return self._leaf_solve(x, k << span, (k + 1) << span, base, True)

    def apply_inverse(self, v):
        v = np.asarray(v)
        if v.shape[0] != self.n:
            raise ValueError(f"right-hand side has length {v.shape[0]}, expected {self.n}")
        return self.solve_node(v, 0, 0)

    def matmat(self, v):
        return self.apply_inverse(v)

    def rmatmat(self, v):
        v = np.asarray(v)
        if v.shape[0] != self.n:
            raise ValueError("dimension mismatch")
        return self.solve_node(v, 0, 0, trans=True)

    def rank_stats(self):
        """``(max rank over inverse butterflies, stored complex entries)``."""
        storage = sum(lu.lu.size for lu in self.leaf_inverses)
        max_rank = 0
        for level in self.factor_inverses:
            for b in level:
                if b is None:
                    continue
                r, s = b.rank_stats()
                max_rank = max(max_rank, r)
                storage += s
        return max_rank, int(storage)

    def max_smw_residual(self):
        return max((r for lev in self.smw_residuals for r in lev), default=0.0)


def _chain_operator(F, zc, level, k):
    """``x -> [Z_k]^{-1} B_k x`` for node ``(level, k)`` using finer factors."""
    bf = zc.sibling_blocks[level - 1][k]

    def mm(x):
        return F.solve_node(bf.matmat(x), level, k)

    def rmm(y):
        return bf.rmatmat(F.solve_node(y, level, k, trans=True))

    return LinearOp(bf.shape, mm, rmm)


def _smw_residual(bbar, quads, n1, n2, seed):
    """Max relative ``||(I+B)(I+Bbar)x - x||`` over Gaussian probes."""
    rng = np.random.default_rng(seed)
    x = gaussian(rng, (n1 + n2, RESIDUAL_PROBES))
    y = x if bbar is None else x + bbar.matmat(x)
    op = block_2x2(quads, (n1, n2), (n1, n2))
    r = y + op.matmat(y) - x
    return float(np.max(np.linalg.norm(r, axis=0) / np.linalg.norm(x, axis=0)))


INNER_TOL_FACTOR = 0.3


def factorize(zc, tol=1e-4, cfg=None, inner_tol=None):
    """Build the inverse factors of a :class:`CompressedImpedance`.

    ``tol`` is the accuracy target of the factorization; the individual
    reconstructions run at ``inner_tol`` (default ``0.3 * tol``) since their
    errors are amplified by the identity-plus blocks they invert.

    Raises :class:`~bfdirect.linalg.SingularMatrixError` for a singular
    leaf and :class:`~bfdirect.randomized.RankOverflowError` when a
    reconstruction cannot meet its accuracy gate.
    """
    if cfg is None:
        cfg = SketchConfig(r=8)
    if not tol > 0:
        raise ValueError("tol must be positive")
    inner = INNER_TOL_FACTOR * tol if inner_tol is None else inner_tol
    memory = RankMemory()
    tree = zc.tree
    L = tree.levels
    leaves = []
    for k, blk in enumerate(zc.leaf_blocks):
        try:
            leaves.append(LUFactor(blk))
        except SingularMatrixError as exc:
            raise SingularMatrixError(f"leaf {k} is singular") from exc
    F = FactoredOperator(tree, tol, leaves, [None] * L, [[None] * (1 << l) for l in range(L)],
                         [[0.0] * (1 << l) for l in range(L)])
    for level in range(L, 0, -1):
        V = L - level
        row = []
        for k in range(1 << level):
            bf = zc.sibling_blocks[level - 1][k]
            if bf.rank_stats()[0] == 0:
                row.append(None)
            elif V == 0:
                lu = leaves[k]
                row.append(low_rank_butterfly(lu.solve(bf.left[0]), bf.right[0]))
            else:
                # factor inverses of k and its descendants enter the chain
                finer = [F.factor_inverses[lev][j] for lev in range(level, L)
                         for j in range(k << (lev - level), (k + 1) << (lev - level))]
                c = _config(cfg, [bf] + finer, _derive(cfg.seed, 100, level, k), V=V,
                            memory=memory)
                row.append(_rebuild(_chain_operator(F, zc, level, k),
                                    bf.row_sizes, bf.col_sizes, V, inner, c, memory))
        F.partial_scattering[level - 1] = row
        for kp in range(1 << (level - 1)):
            b12, b21 = row[2 * kp], row[2 * kp + 1]
            leaf_sizes = tree.leaf_sizes(level - 1, kp)
            s1, s2 = _split_sizes(leaf_sizes)
            if b12 is None and b21 is None:
                bbar = None
                F.smw_residuals[level - 1][kp] = 0.0
            else:
                bbar = invert_ipb([[None, b12], [b21, None]], V + 1, inner, cfg, sizes=(s1, s2),
                                  seed=_derive(cfg.seed, 200, level - 1, kp), memory=memory)
                if bbar.rank_stats()[0] == 0:
                    bbar = None
                n1, n2 = int(s1.sum()), int(s2.sum())
                F.smw_residuals[level - 1][kp] = _smw_residual(
                    bbar, [[None, b12], [b21, None]], n1, n2, _derive(cfg.seed, 300, level - 1, kp))
            F.factor_inverses[level - 1][kp] = bbar
        logger.debug("level %d factored", level)
    return F


def apply_inverse(F, v):
    return F.apply_inverse(v)
