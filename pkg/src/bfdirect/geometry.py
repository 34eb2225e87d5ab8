"""Scatterer curves and their pulse-basis discretization.

All lengths are in free-space wavelengths, so the wavenumber is 2*pi.
A curve is an arclength-parameterized map built from a :class:`CurveSpec`;
:func:`discretize` cuts it into straight chords whose midpoints are the
delta-testing points and whose supports carry the pulse basis functions.
"""

from dataclasses import dataclass, field
import math
from typing import Callable, Optional, Sequence

import numpy as np

KINDS = (
    "circle",
    "smooth_semicircle",
    "corrugated_semicircle",
    "corrugated_corner_reflector",
    "open_cavity",
    "polyline",
)


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("non-finite coordinate")


@dataclass(frozen=True)
class Segment:
    start: Point2
    end: Point2

    @property
    def midpoint(self) -> Point2:
        return Point2(0.5 * (self.start.x + self.end.x),
                      0.5 * (self.start.y + self.end.y))

    @property
    def length(self) -> float:
        return math.hypot(self.end.x - self.start.x, self.end.y - self.start.y)


@dataclass(frozen=True)
class CurveSpec:
    """Parameters of one scatterer.

    ``size`` is the radius for the circular kinds, the arm length of the
    corner reflector, and the aperture width of the open cavity. For
    ``polyline`` the vertices are given explicitly and ``size`` is ignored
    (beyond being positive).
    """

    kind: str
    size: float
    corrugation_period: float = 0.0
    corrugation_depth: float = 0.0
    vertices: Optional[Sequence[Sequence[float]]] = None

    def __post_init__(self):
        kind = self.kind.lower()
        object.__setattr__(self, "kind", kind)
        if kind not in KINDS:
            raise ValueError(f"unknown curve kind {self.kind!r}")
        if not self.size > 0:
            raise ValueError("size must be positive")
        if self.corrugation_depth < 0 or self.corrugation_period < 0:
            raise ValueError("corrugation parameters must be non-negative")
        if self.corrugation_depth > 0:
            if not self.corrugation_period > 0:
                raise ValueError("corrugation depth requires a positive period")
            # beyond this the displaced curve folds over itself
            if self.corrugation_depth >= self.corrugation_period / math.pi:
                raise ValueError("corrugation depth >= period/pi is not rectifiable")
            if kind in ("circle", "smooth_semicircle", "corrugated_semicircle") \
                    and self.corrugation_depth >= self.size:
                raise ValueError("corrugation depth must be smaller than the radius")
        if kind == "polyline":
            if self.vertices is None or len(self.vertices) < 2:
                raise ValueError("polyline needs at least two vertices")

    @property
    def corner_arclengths(self) -> list:
        return list(generate_curve(self).corners)


@dataclass
class Curve:
    """Arclength-parameterized curve (before corrugation).

    ``point(s)`` and ``normal(s)`` are vectorized over ``s`` in
    ``[0, length]``. ``corners`` are interior arclengths where the tangent
    jumps. ``depth``/``period`` describe the sinusoidal displacement along
    the normal; on curves with corners the phase is measured from the
    nearest corner so the displaced curve stays connected.
    """

    length: float
    point: Callable
    normal: Callable
    corners: tuple = ()
    closed: bool = False
    depth: float = 0.0
    period: float = 0.0
    _fine: Optional[tuple] = field(default=None, repr=False)

    def displaced(self, s):
        s = np.asarray(s, dtype=float)
        pts = self.point(s)
        if self.depth == 0.0:
            return pts
        phase = s
        if self.corners:
            # distance to the nearest corner keeps the displacement zero
            # (hence continuous) where two straight pieces meet
            c = np.asarray(self.corners)
            phase = np.min(np.abs(s[..., None] - c), axis=-1)
        offset = self.depth * np.sin(2.0 * np.pi * phase / self.period)
        return pts + offset[..., None] * self.normal(s)

    def _arclength_table(self, samples_per_unit=400):
        if self._fine is None:
            knots = [0.0, *self.corners, self.length]
            ss, cum = [], []
            total = 0.0
            for a, b in zip(knots[:-1], knots[1:]):
                n = max(64, int(math.ceil((b - a) * samples_per_unit)))
                s = np.linspace(a, b, n + 1)
                p = self.displaced(s)
                d = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(p, axis=0).T))])
                ss.append(s)
                cum.append(total + d)
                total += d[-1]
            self._fine = (ss, cum, total)
        return self._fine

    @property
    def true_length(self) -> float:
        """Arclength of the displaced (corrugated) curve."""
        if self.depth == 0.0:
            return self.length
        return self._arclength_table()[2]

    def true_corners(self):
        if self.depth == 0.0:
            return list(self.corners)
        _, cum, _ = self._arclength_table()
        return [c[-1] for c in cum[:-1]]

    def parameter_at(self, t):
        """Base parameter at displaced-curve arclength ``t``."""
        t = np.asarray(t, dtype=float)
        if self.depth == 0.0:
            return t
        ss, cum, _ = self._arclength_table()
        s_all = np.concatenate(ss)
        c_all = np.concatenate(cum)
        return np.interp(t, c_all, s_all)


def _arc(radius, theta0, theta1):
    def point(s):
        th = theta0 + np.asarray(s, dtype=float) / radius
        return np.stack([radius * np.cos(th), radius * np.sin(th)], axis=-1)

    def normal(s):
        th = theta0 + np.asarray(s, dtype=float) / radius
        return np.stack([np.cos(th), np.sin(th)], axis=-1)

    return point, normal, radius * (theta1 - theta0)


def _polyline(vertices):
    v = np.asarray(vertices, dtype=float)
    edges = np.diff(v, axis=0)
    lens = np.hypot(edges[:, 0], edges[:, 1])
    if np.any(lens <= 0):
        raise ValueError("repeated polyline vertex")
    knots = np.concatenate([[0.0], np.cumsum(lens)])
    tangents = edges / lens[:, None]
    # right-hand normal of the direction of travel
    normals = np.stack([tangents[:, 1], -tangents[:, 0]], axis=-1)

    def which(s):
        return np.clip(np.searchsorted(knots, s, side="right") - 1, 0, len(lens) - 1)

    def point(s):
        s = np.asarray(s, dtype=float)
        i = which(s)
        return v[i] + (s - knots[i])[..., None] * tangents[i]

    def normal(s):
        return normals[which(np.asarray(s, dtype=float))]

    return point, normal, float(knots[-1]), tuple(float(k) for k in knots[1:-1])


def generate_curve(spec: CurveSpec) -> Curve:
    """Build the arclength-parameterized curve described by ``spec``."""
    kind, a = spec.kind, spec.size
    depth, period = spec.corrugation_depth, spec.corrugation_period
    if kind == "circle":
        point, normal, length = _arc(a, 0.0, 2.0 * math.pi)
        if depth > 0:
            turns = length / period
            if abs(turns - round(turns)) > 1e-9 * max(1.0, turns):
                raise ValueError("closed corrugated circle needs a whole number of periods")
        return Curve(length, point, normal, closed=True, depth=depth, period=period)
    if kind in ("smooth_semicircle", "corrugated_semicircle"):
        if kind == "smooth_semicircle":
            depth = 0.0
        # convex side faces +x, mirror-symmetric about the x axis
        point, normal, length = _arc(a, -0.5 * math.pi, 0.5 * math.pi)
        return Curve(length, point, normal, depth=depth, period=period)
    if kind == "corrugated_corner_reflector":
        h = a / math.sqrt(2.0)
        verts = [(h, -h), (0.0, 0.0), (h, h)]
    elif kind == "open_cavity":
        w, d = a, 0.5 * a
        verts = [(d, -0.5 * w), (0.0, -0.5 * w), (0.0, 0.5 * w), (d, 0.5 * w)]
    else:
        verts = spec.vertices
    point, normal, length, corners = _polyline(verts)
    return Curve(length, point, normal, corners=corners, depth=depth, period=period)


def discretize(curve: Curve, target_seg_len: float):
    """Cut ``curve`` into equal-arclength chords.

    Returns ``(segments, corner_junctions)`` where ``segments`` is a
    :class:`Mesh` and ``corner_junctions`` lists the segment indices ``j``
    such that segments ``j-1`` and ``j`` meet at a corner.
    """
    if not target_seg_len > 0:
        raise ValueError("target segment length must be positive")
    total = curve.true_length
    if total < 2.0 * target_seg_len:
        raise ValueError("curve too short for the requested segment length")
    n = int(math.ceil(total / target_seg_len - 1e-9))
    knots = [0.0, *curve.true_corners(), total]
    pieces = np.diff(knots)
    if np.any(pieces <= 0):
        raise ValueError("degenerate curve piece")

    # largest-remainder split so every piece is within one segment of ideal
    ideal = pieces * n / total
    counts = np.maximum(np.floor(ideal).astype(int), 1)
    while counts.sum() < n:
        counts[np.argmax(ideal - counts)] += 1
    while counts.sum() > n:
        over = np.where(counts > 1, counts - ideal, -np.inf)
        counts[np.argmax(over)] -= 1

    ts = [np.array([0.0])]
    junctions = []
    for a, b, c in zip(knots[:-1], knots[1:], counts):
        ts.append(np.linspace(a, b, c + 1)[1:])
        junctions.append(int(sum(len(t) for t in ts) - 1))
    t = np.concatenate(ts)
    if curve.closed:
        t[-1] = total
    nodes = curve.displaced(curve.parameter_at(t))
    if curve.closed:
        nodes[-1] = nodes[0]
    return Mesh(nodes[:-1].copy(), nodes[1:].copy()), junctions[:-1]


class Mesh:
    """Chord endpoints of a discretized curve, stored as ``(N, 2)`` arrays.

    Indexing yields :class:`Segment` objects; the numeric solver works on
    the arrays directly.
    """

    def __init__(self, starts, ends):
        self.starts = np.asarray(starts, dtype=float)
        self.ends = np.asarray(ends, dtype=float)
        self.midpoints = 0.5 * (self.starts + self.ends)
        d = self.ends - self.starts
        self.lengths = np.hypot(d[:, 0], d[:, 1])
        if np.any(self.lengths <= 0):
            raise ValueError("degenerate (zero-length) segment")

    def __len__(self):
        return len(self.lengths)

    def __getitem__(self, i) -> Segment:
        s, e = self.starts[i], self.ends[i]
        return Segment(Point2(*s), Point2(*e))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @classmethod
    def from_segments(cls, segments):
        starts = [(s.start.x, s.start.y) for s in segments]
        ends = [(s.end.x, s.end.y) for s in segments]
        return cls(starts, ends)


def build_mesh(spec: CurveSpec, seg_len: float = 0.05):
    """Convenience wrapper: curve generation followed by discretization."""
    return discretize(generate_curve(spec), seg_len)
