"""Binary subscatterer tree over contiguous segment index ranges."""

from dataclasses import dataclass

import numpy as np

GUARD = 2  # corners may not sit within this many segments of a leaf boundary


@dataclass(frozen=True)
class SubscattererTree:
    """L-level binary partition of ``[0, n)``.

    ``bounds[l]`` holds the ``2**l + 1`` boundary indices of level ``l``;
    node ``k`` of level ``l`` covers ``[bounds[l][k], bounds[l][k+1])``.
    """

    n: int
    levels: int
    bounds: tuple

    def node(self, level, k):
        b = self.bounds[level]
        return int(b[k]), int(b[k + 1])

    def size(self, level, k):
        lo, hi = self.node(level, k)
        return hi - lo

    def nodes(self, level):
        b = self.bounds[level]
        return [(int(b[k]), int(b[k + 1])) for k in range(len(b) - 1)]

    def leaf_sizes(self, level, k):
        """Sizes of the leaves below node ``(level, k)``, in order."""
        lo, hi = self.node(level, k)
        b = self.bounds[self.levels]
        i0 = int(np.searchsorted(b, lo))
        i1 = int(np.searchsorted(b, hi))
        return np.diff(b[i0:i1 + 1])

    def max_leaf(self):
        return int(np.max(np.diff(self.bounds[self.levels])))


def _split(lo, hi, corners):
    mid = (lo + hi) // 2 if (hi - lo) % 2 == 0 else (lo + hi + 1) // 2
    bad = [c for c in corners if lo < c < hi]
    if not bad:
        return mid

    def ok(s):
        return lo < s < hi and all(abs(s - c) > GUARD for c in bad)

    if ok(mid):
        return mid
    for off in range(1, hi - lo):
        # prefer the larger index when both are equally close to the midpoint
        for cand in (mid + off, mid - off):
            if ok(cand):
                return cand
    raise ValueError("corner density makes guard bands infeasible")


def build_tree(segments, corner_junctions=(), levels=1, min_leaf=8):
    """Recursively bisect segment indices into a ``levels``-deep tree.

    ``segments`` may be a mesh or just the segment count. A proposed split
    within ``GUARD`` segments of a corner junction moves to the closest index
    at distance ``GUARD + 1``, ties going to the larger index.
    """
    n = segments if isinstance(segments, (int, np.integer)) else len(segments)
    if levels < 1:
        raise ValueError("need at least one level")
    if n < (2 ** levels) * min_leaf:
        raise ValueError(f"{n} segments cannot fill {2 ** levels} leaves of {min_leaf}")
    corners = sorted(int(c) for c in corner_junctions)
    bounds = [np.array([0, n])]
    for _ in range(levels):
        prev = bounds[-1]
        nxt = [int(prev[0])]
        for lo, hi in zip(prev[:-1], prev[1:]):
            nxt.append(_split(int(lo), int(hi), corners))
            nxt.append(int(hi))
        bounds.append(np.array(nxt))
    for lo, hi in zip(bounds[-1][:-1], bounds[-1][1:]):
        if hi - lo < 1:
            raise ValueError("empty leaf")
    return SubscattererTree(n, levels, tuple(bounds))


def auto_levels(n, leaf_target=100):
    """Tree depth giving leaves of roughly ``leaf_target`` unknowns."""
    return max(1, int(np.floor(np.log2(n / leaf_target))))
