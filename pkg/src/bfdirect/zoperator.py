"""Compressed impedance matrix: dense leaf self-blocks plus sibling butterflies."""

from dataclasses import dataclass
import logging

import numpy as np

from .butterfly import compress_block

logger = logging.getLogger(__name__)


@dataclass
class CompressedImpedance:
    """Hierarchical layout of ``Z``.

    ``leaf_blocks[k]`` is the dense self-interaction of leaf ``k``.
    ``sibling_blocks[l-1][k]`` (``l = 1..L``) is the butterfly for rows of
    level-``l`` node ``k`` and columns of its sibling ``k ^ 1``; so within
    a parent, even ``k`` is the upper-right block and odd ``k`` the
    lower-left one.
    """

    tree: object
    leaf_blocks: list
    sibling_blocks: list

    @property
    def n(self):
        return self.tree.n

    @property
    def shape(self):
        return self.n, self.n

    def blocks(self):
        """Yield ``(row_range, col_range, block)`` for every stored block."""
        L = self.tree.levels
        for k, (lo, hi) in enumerate(self.tree.nodes(L)):
            yield (lo, hi), (lo, hi), self.leaf_blocks[k]
        for lev in range(1, L + 1):
            for k, bf in enumerate(self.sibling_blocks[lev - 1]):
                yield self.tree.node(lev, k), self.tree.node(lev, k ^ 1), bf

    def matmat(self, x):
        x = np.asarray(x)
        if x.shape[0] != self.n:
            raise ValueError("dimension mismatch")
        y = np.zeros((self.n,) + x.shape[1:], dtype=np.result_type(x, complex))
        for (r0, r1), (c0, c1), blk in self.blocks():
            y[r0:r1] += blk @ x[c0:c1] if isinstance(blk, np.ndarray) else blk.matmat(x[c0:c1])
        return y

    def rmatmat(self, y):
        y = np.asarray(y)
        if y.shape[0] != self.n:
            raise ValueError("dimension mismatch")
        x = np.zeros((self.n,) + y.shape[1:], dtype=np.result_type(y, complex))
        for (r0, r1), (c0, c1), blk in self.blocks():
            x[c0:c1] += blk.T @ y[r0:r1] if isinstance(blk, np.ndarray) else blk.rmatmat(y[r0:r1])
        return x

    def dense(self):
        out = np.zeros((self.n, self.n), dtype=complex)
        for (r0, r1), (c0, c1), blk in self.blocks():
            out[r0:r1, c0:c1] = blk if isinstance(blk, np.ndarray) else blk.dense()
        return out

    def rank_stats(self):
        """``(max butterfly rank, stored complex entries)`` including leaves."""
        max_rank = 0
        storage = sum(b.size for b in self.leaf_blocks)
        for level in self.sibling_blocks:
            for bf in level:
                r, s = bf.rank_stats()
                max_rank = max(max_rank, r)
                storage += s
        return max_rank, storage


def compress_impedance(kernel, tree, tol, seed=0):
    """Assemble leaves densely and butterfly-compress every sibling block.

    ``kernel`` is an :class:`~bfdirect.efie.ImpedanceKernel` (anything with
    a ``block(rows, cols)`` method works).
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    L = tree.levels
    leaves = [kernel.block(np.arange(lo, hi), np.arange(lo, hi)) for lo, hi in tree.nodes(L)]
    siblings = []
    for lev in range(1, L + 1):
        row = []
        for k in range(1 << lev):
            row.append(compress_block(kernel.block, (lev, k), (lev, k ^ 1), tree, tol, seed=seed))
        siblings.append(row)
        logger.debug("level %d: max rank %d", lev, max(b.rank_stats()[0] for b in row))
    return CompressedImpedance(tree, leaves, siblings)


def apply_z(zc, x):
    return zc.matmat(x)


def apply_z_t(zc, y):
    return zc.rmatmat(y)
