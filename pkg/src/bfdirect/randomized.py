"""Butterfly reconstruction from products with random structured matrices.

The operator is only touched through ``apply`` (``B @ X``) and ``apply_t``
(``B.T @ Y``). An auxiliary butterfly with i.i.d. complex Gaussian blocks
fixes the gauge of every recovered factor: each recovered block ``R``
satisfies ``R @ Rhat.T = I`` (right half) or ``Rhat.T @ R = I`` (left
half) against its random counterpart, so the factors can be recovered one
level at a time by small pseudoinverse solves.

Right factors ``0..vm`` (``vm = V // 2``) are recovered from sketches
``U @ B`` with ``U`` supported on one observation node; left factors
``V+1..vm+1`` from sketches ``B @ U`` with ``U`` supported on one source
node. The last left factor is glued to the already recovered right
factors instead of their random stand-ins.
"""

from dataclasses import dataclass, field
import logging

import numpy as np

from .butterfly import ButterflyMatrix, offsets, out_states, recompress, zero_butterfly
from .linalg import pinv

logger = logging.getLogger(__name__)

OVERSAMPLING = 10
RANK_MARGIN = 4
RCOND_FACTOR = 0.1  # sketch pseudo-inverse cutoff relative to tol
SKETCH_BYTES = 32 * 2 ** 20
RECOMPRESS_STEPS = (0.25, 0.0625, 0.0)  # fractions of tol; 0 keeps the raw sketch


class RankOverflowError(RuntimeError):
    """Reconstruction failed the accuracy gate at every allowed rank."""

    def __init__(self, message, last_error):
        super().__init__(message)
        self.last_error = last_error


@dataclass
class SketchConfig:
    r: int
    p: int = None
    seed: int = 0
    max_retries: int = 3
    oversampling: int = field(default=OVERSAMPLING)

    def __post_init__(self):
        if self.p is None:
            self.p = self.r + self.oversampling
        if not self.p > self.r >= 1:
            raise ValueError("need p > r >= 1")


def gaussian(rng, shape):
    """Complex standard Gaussian: real and imaginary parts ~ N(0, 1/2)."""
    shape = tuple(np.atleast_1d(shape).astype(int))
    pair = rng.standard_normal(shape + (2,))
    pair *= np.sqrt(0.5)
    return pair.view(complex).reshape(shape)


def _rng(*key):
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


def make_aux(row_sizes, col_sizes, V, r, seed):
    """Random butterfly with uniform rank ``r`` (outer blocks ``m_i x r``,
    ``r x n_j``; kernel groups ``2r x 2r``)."""
    nblk = 1 << V
    if len(row_sizes) != nblk or len(col_sizes) != nblk:
        raise ValueError("sizes do not match V")
    rng = _rng(seed, V, r, 0xA0)
    right = [gaussian(rng, (r, int(c))) for c in col_sizes]
    kernels = [[gaussian(rng, (2 * r, 2 * r)) for _ in range(nblk // 2)] for _ in range(V)]
    left = [gaussian(rng, (int(m), r)) for m in row_sizes]
    ranks = [np.full(nblk, r) for _ in range(V + 1)]
    return ButterflyMatrix(row_sizes, col_sizes, right, kernels, left, ranks)


def structured_probe(side, node_range, total_dim, p, seed):
    """Gaussian probe supported on one subscatterer.

    ``side="row"`` gives a ``p x total_dim`` matrix with nonzero columns only
    inside ``node_range``; ``side="col"`` gives ``total_dim x p`` with
    nonzero rows only there.
    """
    lo, hi = node_range
    if not 0 <= lo < hi <= total_dim:
        raise ValueError("probe range must be a non-empty sub-range")
    rng = _rng(seed, lo, hi, 0xB0)
    block = gaussian(rng, (hi - lo, p))
    out = np.zeros((total_dim, p), dtype=complex)
    out[lo:hi] = block
    if side == "row":
        return out.T
    if side == "col":
        return out
    raise ValueError("side must be 'row' or 'col'")


def estimate_rank(constituents, margin=RANK_MARGIN):
    """Largest rank among the butterflies composing an operator, plus a margin."""
    if not constituents:
        raise ValueError("need at least one constituent")
    ranks = [c.rank_stats()[0] for c in constituents if c is not None]
    return max(margin, max(ranks, default=0) + margin)


# ----------------------------------------------------------------------
# restricted partial products through a butterfly
# ----------------------------------------------------------------------
def _right_partial(bf, x, upto, obs):
    """States ``(obs, s)`` at level ``upto`` of ``bf``'s right chain applied to
    ``x``, computing only the ancestors of ``obs``. Returns a list over ``s``."""
    V = bf.levels
    co = offsets(bf.col_sizes)
    st = {j: bf.right[j] @ x[co[j]:co[j + 1]] for j in range(1 << V)}
    for t in range(1, upto + 1):
        o_t = obs >> (upto - t)
        half = o_t & 1
        w = 1 << (V - t)
        rout = bf.ranks[t]
        new = {}
        for s in range(w):
            g = (o_t >> 1) * w + s
            a0, a1 = out_states(t, V, g)
            blk = bf.kernels[t - 1][g]
            rows = blk[:rout[a0]] if half == 0 else blk[rout[a0]:]
            new[o_t * w + s] = rows @ np.concatenate((st[2 * g], st[2 * g + 1]), axis=0)
        st = new
    w = 1 << (V - upto)
    return [st[obs * w + s] for s in range(w)]


def _right_partial_src(bf, x, upto, src):
    """States ``(o, src)`` for every ``o`` at level ``upto``, where ``x`` is
    supported on source node ``src`` (level ``V - upto``). List over ``o``."""
    V = bf.levels
    co = offsets(bf.col_sizes)
    span = 1 << upto
    st = {j: bf.right[j] @ x[co[j]:co[j + 1]] for j in range(src * span, (src + 1) * span)}
    for t in range(1, upto + 1):
        w = 1 << (V - t)
        rout = bf.ranks[t]
        sub = 1 << (upto - t)  # source nodes at level V-t below src
        new = {}
        for o_par in range(1 << (t - 1)):
            for s in range(src * sub, (src + 1) * sub):
                g = o_par * w + s
                a0, a1 = out_states(t, V, g)
                y = bf.kernels[t - 1][g] @ np.concatenate((st[2 * g], st[2 * g + 1]), axis=0)
                new[a0] = y[:rout[a0]]
                new[a1] = y[rout[a0]:]
        st = new
    w = 1 << (V - upto)
    return [st[o * w + src] for o in range(1 << upto)]


def _left_partial(bf, y, downto, src):
    """Transposed states ``(o, src)`` at level ``downto`` (``src`` at source
    level ``V - downto``) of ``bf``'s left chain applied to ``y``. List over ``o``."""
    V = bf.levels
    ro = offsets(bf.row_sizes)
    st = {i: bf.left[i].T @ y[ro[i]:ro[i + 1]] for i in range(1 << V)}
    for t in range(V - 1, downto - 1, -1):
        # kernel level t+1 maps level-t states to level-(t+1) states
        v = t + 1
        s_t = src >> (t - downto)  # wanted source node at level V-t
        half = s_t & 1
        w = 1 << (V - v)
        rin = bf.ranks[t]
        new = {}
        for o_par in range(1 << t):
            g = o_par * w + (s_t >> 1)
            a0, a1 = out_states(v, V, g)
            blk = bf.kernels[v - 1][g]
            cols = blk[:, :rin[2 * g]] if half == 0 else blk[:, rin[2 * g]:]
            new[2 * g + half] = cols.T @ np.concatenate((st[a0], st[a1]), axis=0)
        st = new
    w = 1 << (V - downto)
    return [st[o * w + src] for o in range(1 << downto)]


# ----------------------------------------------------------------------
# reconstruction
# ----------------------------------------------------------------------
def _chunks(count, width, rows):
    per = max(1, int(SKETCH_BYTES // max(1, 16 * rows * width)))
    for start in range(0, count, per):
        yield range(start, min(count, start + per))


def _attempt(apply, apply_t, row_sizes, col_sizes, V, r, p, seed, rcond):
    nblk = 1 << V
    m, n = int(np.sum(row_sizes)), int(np.sum(col_sizes))
    ro, co = offsets(row_sizes), offsets(col_sizes)
    aux = make_aux(row_sizes, col_sizes, V, r, seed)
    vm = V // 2
    right = [None] * nblk
    kern = [[np.zeros((2 * r, 2 * r), complex) for _ in range(nblk // 2)] for _ in range(V)]
    left = [None] * nblk

    # right factors 0..vm from sketches U @ B, U on one observation node
    for v in range(vm + 1):
        span = 1 << (V - v)
        for chunk in _chunks(1 << v, p, n):
            ut = np.zeros((m, p * len(chunk)), dtype=complex)
            for c, i in enumerate(chunk):
                lo, hi = ro[i * span], ro[(i + 1) * span]
                ut[lo:hi, c * p:(c + 1) * p] = gaussian(_rng(seed, 1, v, i), (hi - lo, p))
            sk = apply_t(ut)  # (U B)^T, n x p per node
            for c, i in enumerate(chunk):
                a = sk[:, c * p:(c + 1) * p]
                if v == 0:
                    for j in range(nblk):
                        vo = a[co[j]:co[j + 1]]
                        vi = aux.right[j] @ vo
                        right[j] = pinv(vi.T, rcond) @ vo.T
                    continue
                st = _right_partial(aux, a, v - 1, i >> 1)
                half = i & 1
                w = 1 << (V - v)
                for s in range(w):
                    g = (i >> 1) * w + s
                    vo = np.concatenate((st[2 * s], st[2 * s + 1]), axis=0)
                    vi = aux.kernels[v - 1][g][half * r:(half + 1) * r] @ vo
                    kern[v - 1][g][half * r:(half + 1) * r] = pinv(vi.T, rcond) @ vo.T

    computed_right = ButterflyMatrix(row_sizes, col_sizes, right, kern,
                                     [np.zeros((int(mi), r), complex) for mi in row_sizes],
                                     [np.full(nblk, r) for _ in range(V + 1)])

    # left factors V+1..vm+1 from sketches B @ U, U on one source node
    for v in range(V + 1, vm, -1):
        lev_src = V - v + 1
        span = 1 << (V - lev_src)
        for chunk in _chunks(1 << lev_src, p, m):
            u = np.zeros((n, p * len(chunk)), dtype=complex)
            for c, a in enumerate(chunk):
                lo, hi = co[a * span], co[(a + 1) * span]
                u[lo:hi, c * p:(c + 1) * p] = gaussian(_rng(seed, 2, v, a), (hi - lo, p))
            sk = apply(u)
            for c, a in enumerate(chunk):
                ca = sk[:, c * p:(c + 1) * p]
                ua = u[:, c * p:(c + 1) * p]
                junction = v == vm + 1
                if junction:
                    glue = _right_partial_src(computed_right, ua, vm, a)
                if v == V + 1:
                    for i in range(nblk):
                        vo = ca[ro[i]:ro[i + 1]]
                        vi = glue[i] if junction else aux.left[i].T @ vo
                        left[i] = vo @ pinv(vi, rcond)
                    continue
                st = _left_partial(aux, ca, v, a >> 1)
                half = a & 1
                w = 1 << (V - v)
                for o_par in range(1 << (v - 1)):
                    g = o_par * w + (a >> 1)
                    vo = np.concatenate((st[2 * o_par], st[2 * o_par + 1]), axis=0)
                    if junction:
                        vi = glue[o_par]
                    else:
                        vi = aux.kernels[v - 1][g][:, half * r:(half + 1) * r].T @ vo
                    kern[v - 1][g][:, half * r:(half + 1) * r] = vo @ pinv(vi, rcond)

    ranks = [np.full(nblk, r) for _ in range(V + 1)]
    return ButterflyMatrix(row_sizes, col_sizes, right, kern, left, ranks)


def verification_error(apply, bf, probes=3, seed=0):
    """Max relative error of ``bf`` against ``apply`` on Gaussian probes."""
    x = gaussian(_rng(seed, 0xC0), (bf.shape[1], probes))
    ref = apply(x)
    got = bf.matmat(x)
    den = np.linalg.norm(ref, axis=0)
    num = np.linalg.norm(got - ref, axis=0)
    if np.all(den == 0):
        return float(np.max(num))
    den = np.where(den == 0, 1.0, den)
    return float(np.max(num / den))


def max_useful_rank(row_sizes, col_sizes):
    """Largest state dimension any exact butterfly of this shape can need."""
    V = int(round(np.log2(len(row_sizes))))
    ro, co = offsets(row_sizes), offsets(col_sizes)
    best = 1
    for t in range(V + 1):
        so, ss = 1 << (V - t), 1 << t
        hmax = max(ro[(o + 1) * so] - ro[o * so] for o in range(1 << t))
        wmax = max(co[(s + 1) * ss] - co[s * ss] for s in range(1 << (V - t)))
        best = max(best, min(hmax, wmax))
    return best


def reconstruct(apply, apply_t, row_sizes, col_sizes, V, cfg, tol=1e-4, rcond=None,
                accuracy_factor=10.0):
    """Recover a ``V``-level butterfly of a black-box operator.

    The result is recompressed at ``tol`` and must reproduce ``apply`` to
    within ``accuracy_factor * tol`` on three fresh probes. If only the
    recompression broke that bound, tighter recompressions are tried first;
    otherwise the rank cap doubles and the sketching is redone, up to
    ``cfg.max_retries`` times, before :class:`RankOverflowError`.
    """
    row_sizes = np.asarray(row_sizes, dtype=int)
    col_sizes = np.asarray(col_sizes, dtype=int)
    if len(row_sizes) != 1 << V or len(col_sizes) != 1 << V:
        raise ValueError("row/col sizes must have 2**V entries")
    eps = accuracy_factor * tol
    if rcond is None:
        rcond = max(1e-12, RCOND_FACTOR * tol)
    cap = max_useful_rank(row_sizes, col_sizes)
    r = min(cfg.r, cap)
    p = cfg.p - cfg.r + r
    err = np.inf
    for attempt in range(cfg.max_retries + 1):
        seed = (cfg.seed, attempt, r)
        raw = _attempt(apply, apply_t, row_sizes, col_sizes, V, r, p,
                       int(np.random.SeedSequence(list(seed)).generate_state(1)[0]), rcond)
        vseed = cfg.seed + 7919 * (attempt + 1)
        bf = recompress(raw, tol)
        err = verification_error(apply, bf, seed=vseed)
        if err > eps and verification_error(apply, raw, seed=vseed) <= eps:
            # the sketch itself was accurate; truncation errors add up over
            # levels, so tighten the recompression before re-sketching
            for shrink in RECOMPRESS_STEPS:
                bf = recompress(raw, tol * shrink) if shrink else raw
                err = verification_error(apply, bf, seed=vseed)
                if err <= eps:
                    break
        bf.verify_error = err
        if err <= eps:
            return bf
        logger.info("reconstruction at rank %d missed (%.2e > %.2e)", r, err, eps)
        if r >= cap:
            break
        r = min(2 * r, cap)
        p = r + cfg.oversampling
    raise RankOverflowError(f"butterfly reconstruction failed: error {err:.3e} > {eps:.1e}", err)


def reconstruct_op(op, row_sizes, col_sizes, cfg, tol=1e-4, **kw):
    """:func:`reconstruct` for an object with ``matmat``/``rmatmat``."""
    V = int(round(np.log2(len(row_sizes))))
    if op is None:
        return zero_butterfly(row_sizes, col_sizes)
    return reconstruct(op.matmat, op.rmatmat, row_sizes, col_sizes, V, cfg, tol=tol, **kw)
