"""Butterfly-factorized matrices.

A V-level butterfly stores an ``m x n`` block as the product
``L @ K_V @ ... @ K_1 @ R``. Rows are split into ``2**V`` finest row
blocks and columns into ``2**V`` finest column blocks. Between factors the
data lives in *states* ``(o, s)`` indexed by an observation node ``o`` at
level ``t`` (``2**t`` of them) and a source node ``s`` at level ``V - t``;
state ``(o, s)`` sits at flat position ``o * 2**(V-t) + s``.

* ``right[j]`` maps column block ``j`` to state ``(0, j)`` of level 0.
* ``kernels[v-1][g]`` for ``v = 1..V`` is a dense ``2x2``-block matrix: group
  ``g = o' * 2**(V-v) + s`` reads level-``v-1`` states ``2g`` and ``2g+1``
  (that is ``(o', 2s)`` and ``(o', 2s+1)``) and writes level-``v`` states
  ``(2o', s)`` and ``(2o'+1, s)``.
* ``left[i]`` maps state ``(i, 0)`` of level ``V`` to row block ``i``.

Grouping the kernel blocks this way is the block-diagonal form obtained
after the interleaving row permutation; the permutation itself is never
formed. Ranks may differ from state to state and are kept in ``ranks``.
"""

import logging
import math

import numpy as np
import scipy.linalg

from .linalg import low_rank_approx, rq_orthonormal, truncate_columns

logger = logging.getLogger(__name__)


def out_states(v, levels, g):
    """Flat indices of the two level-``v`` states written by group ``g``."""
    w = 1 << (levels - v)
    o, s = divmod(g, w)
    first = 2 * o * w + s
    return first, first + w


def producer(v, levels, state):
    """``(group, half)`` of the level-``v`` kernel that writes ``state``."""
    w = 1 << (levels - v)
    o, s = divmod(state, w)
    return (o >> 1) * w + s, o & 1


def offsets(sizes):
    return np.concatenate([[0], np.cumsum(sizes)]).astype(int)


class ButterflyMatrix:
    """Factored ``m x n`` block; see the module docstring for the layout.

    ``ranks[t]`` lists the state dimensions at level ``t``. It can be omitted
    for ``V <= 1`` where the outer factors fix every state.
    """

    def __init__(self, row_sizes, col_sizes, right, kernels, left, ranks=None):
        self.row_sizes = np.asarray(row_sizes, dtype=int)
        self.col_sizes = np.asarray(col_sizes, dtype=int)
        nblk = len(self.row_sizes)
        levels = int(round(math.log2(nblk))) if nblk else -1
        if nblk == 0 or 1 << levels != nblk or len(self.col_sizes) != nblk:
            raise ValueError("row/col block counts must be an equal power of two")
        self.levels = levels
        self.right = list(right)
        self.kernels = [list(k) for k in kernels]
        self.left = list(left)
        if ranks is None:
            if levels > 1:
                raise ValueError("ranks are required for V >= 2")
            ranks = [np.array([b.shape[0] for b in self.right], dtype=int)]
            if levels == 1:
                ranks.append(np.array([b.shape[1] for b in self.left], dtype=int))
        self.ranks = [np.asarray(r, dtype=int) for r in ranks]
        self.verify_error = None
        self.check()

    # ------------------------------------------------------------------
    # structure
    # ------------------------------------------------------------------
    @property
    def shape(self):
        return int(self.row_sizes.sum()), int(self.col_sizes.sum())

    @property
    def dtype(self):
        blocks = self.left + self.right
        return np.result_type(*(b.dtype for b in blocks)) if blocks else np.complex128

    def check(self):
        """Assert that consecutive factors compose (raises ``ValueError``)."""
        V = self.levels
        nblk = 1 << V
        if len(self.right) != nblk or len(self.left) != nblk or len(self.kernels) != V:
            raise ValueError("factor block counts do not match 2**V")
        if len(self.ranks) != V + 1 or any(len(r) != nblk for r in self.ranks):
            raise ValueError("ranks must hold V+1 arrays of 2**V entries")
        for j, b in enumerate(self.right):
            if b.shape != (self.ranks[0][j], self.col_sizes[j]):
                raise ValueError(f"right block {j} has shape {b.shape}")
        for i, b in enumerate(self.left):
            if b.shape != (self.row_sizes[i], self.ranks[V][i]):
                raise ValueError(f"left block {i} has shape {b.shape}")
        for v in range(1, V + 1):
            groups = self.kernels[v - 1]
            if len(groups) != nblk // 2:
                raise ValueError(f"level {v} needs {nblk // 2} kernel groups")
            rin, rout = self.ranks[v - 1], self.ranks[v]
            for g, blk in enumerate(groups):
                a0, a1 = out_states(v, V, g)
                want = (rout[a0] + rout[a1], rin[2 * g] + rin[2 * g + 1])
                if blk.shape != want:
                    raise ValueError(f"kernel {v},{g} has shape {blk.shape}, expected {want}")

    def copy(self):
        out = ButterflyMatrix(self.row_sizes, self.col_sizes,
                              [b.copy() for b in self.right],
                              [[b.copy() for b in k] for k in self.kernels],
                              [b.copy() for b in self.left],
                              [r.copy() for r in self.ranks])
        out.verify_error = self.verify_error
        return out

    def scaled(self, alpha):
        out = self.copy()
        out.left = [alpha * b for b in out.left]
        return out

    # ------------------------------------------------------------------
    # products
    # ------------------------------------------------------------------
    def right_states(self, x, upto=None):
        """States after applying ``right`` and kernels ``1..upto`` to ``x``."""
        V = self.levels
        upto = V if upto is None else upto
        xo = offsets(self.col_sizes)
        st = [self.right[j] @ x[xo[j]:xo[j + 1]] for j in range(1 << V)]
        for v in range(1, upto + 1):
            new = [None] * (1 << V)
            rout = self.ranks[v]
            for g, blk in enumerate(self.kernels[v - 1]):
                y = blk @ np.concatenate((st[2 * g], st[2 * g + 1]), axis=0)
                a0, a1 = out_states(v, V, g)
                new[a0] = y[:rout[a0]]
                new[a1] = y[rout[a0]:]
            st = new
        return st

    def left_states(self, y, downto=0):
        """Transposed states: ``left.T`` then kernels ``V..downto+1`` transposed."""
        V = self.levels
        yo = offsets(self.row_sizes)
        st = [self.left[i].T @ y[yo[i]:yo[i + 1]] for i in range(1 << V)]
        for v in range(V, downto, -1):
            new = [None] * (1 << V)
            rin = self.ranks[v - 1]
            for g, blk in enumerate(self.kernels[v - 1]):
                a0, a1 = out_states(v, V, g)
                x = blk.T @ np.concatenate((st[a0], st[a1]), axis=0)
                new[2 * g] = x[:rin[2 * g]]
                new[2 * g + 1] = x[rin[2 * g]:]
            st = new
        return st

    def matmat(self, x):
        x = np.asarray(x)
        if x.shape[0] != self.shape[1]:
            raise ValueError(f"operand has {x.shape[0]} rows, expected {self.shape[1]}")
        st = self.right_states(x)
        parts = [self.left[i] @ st[i] for i in range(len(self.left))]
        return np.concatenate(parts, axis=0)

    def rmatmat(self, y):
        """Plain (non-conjugate) transpose product ``B.T @ y``."""
        y = np.asarray(y)
        if y.shape[0] != self.shape[0]:
            raise ValueError(f"operand has {y.shape[0]} rows, expected {self.shape[0]}")
        st = self.left_states(y)
        parts = [self.right[j].T @ st[j] for j in range(len(self.right))]
        return np.concatenate(parts, axis=0)

    def apply(self, x):
        return self.matmat(x)

    def apply_transpose(self, y):
        return self.rmatmat(y)

    def dense(self):
        return self.matmat(np.eye(self.shape[1], dtype=complex))

    # ------------------------------------------------------------------
    # statistics
    # ------------------------------------------------------------------
    def rank_stats(self):
        """``(max_rank, storage_entries)`` over every stored block."""
        max_rank = max((int(r.max()) for r in self.ranks if len(r)), default=0)
        storage = sum(b.size for b in self.right) + sum(b.size for b in self.left)
        storage += sum(b.size for k in self.kernels for b in k)
        return max_rank, int(storage)

    def recompress(self, tol):
        return recompress(self, tol)


def zero_butterfly(row_sizes, col_sizes, dtype=complex):
    """Rank-zero butterfly with the given finest block sizes."""
    row_sizes = np.asarray(row_sizes, dtype=int)
    col_sizes = np.asarray(col_sizes, dtype=int)
    V = int(round(math.log2(len(row_sizes))))
    nblk = 1 << V
    ranks = [np.zeros(nblk, dtype=int) for _ in range(V + 1)]
    right = [np.zeros((0, c), dtype) for c in col_sizes]
    left = [np.zeros((m, 0), dtype) for m in row_sizes]
    kernels = [[np.zeros((0, 0), dtype) for _ in range(nblk // 2)] for _ in range(V)]
    return ButterflyMatrix(row_sizes, col_sizes, right, kernels, left, ranks)


def low_rank_butterfly(u, w):
    """0-level butterfly ``u @ w``."""
    return ButterflyMatrix([u.shape[0]], [w.shape[1]], [w], [], [u])


def dense_butterfly(a, tol=None):
    """0-level butterfly of a dense block, truncated at ``tol`` if given."""
    a = np.asarray(a, dtype=complex)
    if tol is None:
        return low_rank_butterfly(a.copy(), np.eye(a.shape[1], dtype=complex))
    u, w = low_rank_approx(a, tol)
    return low_rank_butterfly(u, w)


# ----------------------------------------------------------------------
# recompression
# ----------------------------------------------------------------------
def recompress(bf, tol, absolute=False):
    """Re-truncate every state of ``bf`` at relative tolerance ``tol``.

    With ``absolute=True`` every state drops singular values below ``tol``
    times the largest row-block norm (a proxy for ``||B||``) instead.

    A right-to-left sweep makes every right environment row-orthonormal
    (RQ factors absorbed by the consumer), then a left-to-right sweep
    truncates each state by an SVD of the blocks that read it, pushing the
    singular values back toward the columns. Ranks never grow.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    V = bf.levels
    nblk = 1 << V
    right = [b.copy() for b in bf.right]
    kernels = [[b.copy() for b in k] for k in bf.kernels]
    left = [b.copy() for b in bf.left]
    ranks = [r.copy() for r in bf.ranks]

    def absorb_into_consumer(t, state, tmat):
        # consumer of a level-t state is the level-(t+1) kernel (or left)
        if t == V:
            left[state] = left[state] @ tmat
            return
        g, half = divmod(state, 2)
        blk = kernels[t][g]
        r0 = ranks[t][2 * g]
        a, b = blk[:, :r0], blk[:, r0:]
        if half == 0:
            kernels[t][g] = np.concatenate((a @ tmat, b), axis=1)
        else:
            kernels[t][g] = np.concatenate((a, b @ tmat), axis=1)

    # sweep 1: orthonormalize from the right
    for j in range(nblk):
        t, q = rq_orthonormal(right[j])
        right[j] = q
        absorb_into_consumer(0, j, t)
        ranks[0][j] = q.shape[0]
    for v in range(1, V + 1):
        rout = ranks[v]
        for g in range(nblk // 2):
            blk = kernels[v - 1][g]
            a0, a1 = out_states(v, V, g)
            rows = (blk[:rout[a0]], blk[rout[a0]:])
            qs = []
            for state, r in zip((a0, a1), rows):
                t, q = rq_orthonormal(r)
                qs.append(q)
                # consumer split must use the old rank until absorbed
                absorb_into_consumer(v, state, t)
                ranks[v][state] = q.shape[0]
            kernels[v - 1][g] = np.concatenate(qs, axis=0)

    # sweep 2: truncate from the left, pushing S V^H toward the columns
    def push_into_producer(t, state, smat):
        if t == 0:
            right[state] = smat @ right[state]
            return
        g, half = producer(t, V, state)
        blk = kernels[t - 1][g]
        a0, a1 = out_states(t, V, g)
        r0 = ranks[t][a0]
        top, bot = blk[:r0], blk[r0:]
        if half == 0:
            kernels[t - 1][g] = np.concatenate((smat @ top, bot), axis=0)
        else:
            kernels[t - 1][g] = np.concatenate((top, smat @ bot), axis=0)

    # after sweep 1 the singular values below are exact contributions to the
    # whole block, so one absolute threshold tol * ||B|| serves every state
    ref = max((np.linalg.norm(b, 2) for b in left if b.size), default=0.0) if absolute else None
    for i in range(nblk):
        u, sw = truncate_columns(left[i], tol, ref)
        left[i] = u
        push_into_producer(V, i, sw)
        ranks[V][i] = u.shape[1]
    for v in range(V, 0, -1):
        rin = ranks[v - 1]
        for g in range(nblk // 2):
            blk = kernels[v - 1][g]
            r0 = rin[2 * g]
            cols = (blk[:, :r0], blk[:, r0:])
            us = []
            for state, c in zip((2 * g, 2 * g + 1), cols):
                u, sw = truncate_columns(c, tol, ref)
                us.append(u)
                push_into_producer(v - 1, state, sw)
                ranks[v - 1][state] = u.shape[1]
            kernels[v - 1][g] = np.concatenate(us, axis=1)

    out = ButterflyMatrix(bf.row_sizes, bf.col_sizes, right, kernels, left, ranks)
    out.verify_error = bf.verify_error
    return out


# ----------------------------------------------------------------------
# direct construction from matrix entries
# ----------------------------------------------------------------------
def _interp_decomp(m, tol):
    """Column ID ``m ~ m[:, skel] @ p`` via pivoted QR."""
    c = m.shape[1]
    if m.size == 0 or c == 0:
        return np.zeros(0, dtype=int), np.zeros((0, c), m.dtype)
    q, r, perm = scipy.linalg.qr(m, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0:
        return np.zeros(0, dtype=int), np.zeros((0, c), m.dtype)
    k = int(np.count_nonzero(diag > tol * diag[0]))
    skel = perm[:k]
    p = np.zeros((k, c), dtype=m.dtype)
    p[:, skel] = np.eye(k)
    if k < c:
        p[:, perm[k:]] = scipy.linalg.solve_triangular(r[:k, :k], r[:k, k:])
    return skel, p


def _sample_rows(lo, hi, count, rng):
    """Rows of ``[lo, hi)`` used to test column skeletons.

    All rows when the range is small; otherwise both ends (where adjacent
    sources are closest), a uniform stride, and random fill-in.
    """
    n = hi - lo
    if n <= count:
        return np.arange(lo, hi)
    edge = min(8, count // 8)
    picks = [np.arange(lo, lo + edge), np.arange(hi - edge, hi),
             np.linspace(lo, hi - 1, count // 2).astype(int)]
    base = np.unique(np.concatenate(picks))
    extra = count - len(base)
    if extra > 0:
        pool = np.setdiff1d(np.arange(lo, hi), base, assume_unique=True)
        picks.append(rng.choice(pool, size=min(extra, len(pool)), replace=False))
    return np.unique(np.concatenate(picks))


def compress_block(entries, obs_node, src_node, tree, tol, seed=0, id_tol_factor=0.1,
                   oversample=2.0, min_samples=48):
    """Butterfly-compress the interaction ``Z[obs, src]`` of two tree nodes.

    ``entries(rows, cols)`` must return the dense sub-block for global index
    arrays. ``obs_node``/``src_node`` are ``(level, k)`` pairs at the same
    tree level; the butterfly has ``V = tree.levels - level`` levels, one
    per pair of complementary observation/source partitions. Skeleton
    columns for each pair come from an interpolative decomposition on
    sampled observation rows; the result is recompressed at ``tol``.
    """
    lev, ko = obs_node
    lev2, ks = src_node
    if lev != lev2:
        raise ValueError("observation and source nodes must share a level")
    V = tree.levels - lev
    olo, ohi = tree.node(lev, ko)
    slo, shi = tree.node(lev, ks)
    row_sizes = tree.leaf_sizes(lev, ko)
    col_sizes = tree.leaf_sizes(lev, ks)
    if V == 0:
        u, w = low_rank_approx(entries(np.arange(olo, ohi), np.arange(slo, shi)), tol)
        return low_rank_butterfly(u, w)

    rng = np.random.default_rng(np.random.SeedSequence([seed, lev, ko, ks]))
    id_tol = tol * id_tol_factor
    row_off = olo + offsets(row_sizes)
    col_off = slo + offsets(col_sizes)
    nblk = 1 << V

    def obs_range(t, o):
        # observation node o at relative level t spans 2**(V-t) finest blocks
        span = 1 << (V - t)
        return row_off[o * span], row_off[(o + 1) * span]

    def nsamp(c):
        return max(min_samples, int(oversample * c) + 16)

    # level 0: one observation node (everything), finest source blocks
    skel = [None] * nblk
    right = []
    ranks = [np.zeros(nblk, dtype=int) for _ in range(V + 1)]
    lo, hi = obs_range(0, 0)
    for j in range(nblk):
        cols = np.arange(col_off[j], col_off[j + 1])
        rows = _sample_rows(lo, hi, nsamp(len(cols)), rng)
        sk, p = _interp_decomp(entries(rows, cols), id_tol)
        skel[j] = cols[sk]
        right.append(p)
        ranks[0][j] = len(sk)

    kernels = []
    for v in range(1, V + 1):
        new_skel = [None] * nblk
        groups = []
        for g in range(nblk // 2):
            cand = np.concatenate((skel[2 * g], skel[2 * g + 1]))
            rows_blk = []
            for state in out_states(v, V, g):
                o = state >> (V - v)
                lo, hi = obs_range(v, o)
                rows = _sample_rows(lo, hi, nsamp(len(cand)), rng)
                sk, p = _interp_decomp(entries(rows, cand), id_tol)
                new_skel[state] = cand[sk]
                ranks[v][state] = len(sk)
                rows_blk.append(p)
            groups.append(np.concatenate(rows_blk, axis=0))
        kernels.append(groups)
        skel = new_skel

    left = []
    for i in range(nblk):
        rows = np.arange(row_off[i], row_off[i + 1])
        left.append(entries(rows, skel[i]))
    bf = ButterflyMatrix(row_sizes, col_sizes, right, kernels, left, ranks)
    return recompress(bf, tol)
