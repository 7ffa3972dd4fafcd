"""Planar geometry primitives: the rectangular domain and fracture polylines."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import GeometryError

SIDES = ("left", "right", "bottom", "top")


@dataclass(frozen=True)
class Rectangle:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise GeometryError(f"empty rectangle {self}")

    @classmethod
    def from_size(cls, lx: float, ly: float) -> "Rectangle":
        return cls(0.0, 0.0, float(lx), float(ly))

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def diameter(self) -> float:
        return float(np.hypot(self.width, self.height))

    def corners(self) -> np.ndarray:
        return np.array(
            [
                [self.xmin, self.ymin],
                [self.xmax, self.ymin],
                [self.xmax, self.ymax],
                [self.xmin, self.ymax],
            ]
        )

    def contains(self, pts, tol: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return (
            (pts[:, 0] >= self.xmin - tol)
            & (pts[:, 0] <= self.xmax + tol)
            & (pts[:, 1] >= self.ymin - tol)
            & (pts[:, 1] <= self.ymax + tol)
        )

    def distance_to_boundary(self, pts) -> np.ndarray:
        """Distance of interior points to the nearest side (negative outside)."""
        pts = np.atleast_2d(pts)
        d = np.stack(
            [
                pts[:, 0] - self.xmin,
                self.xmax - pts[:, 0],
                pts[:, 1] - self.ymin,
                self.ymax - pts[:, 1],
            ]
        )
        return d.min(axis=0)

    def side_of(self, pts, tol: float) -> np.ndarray:
        """Index into SIDES of the side each point lies on, -1 if none."""
        pts = np.atleast_2d(pts)
        out = np.full(len(pts), -1, dtype=int)
        out[np.abs(pts[:, 1] - self.ymax) <= tol] = 3
        out[np.abs(pts[:, 1] - self.ymin) <= tol] = 2
        out[np.abs(pts[:, 0] - self.xmax) <= tol] = 1
        out[np.abs(pts[:, 0] - self.xmin) <= tol] = 0
        return out

    def clip(self, other: "Rectangle") -> "Rectangle":
        return Rectangle(
            max(self.xmin, other.xmin),
            max(self.ymin, other.ymin),
            min(self.xmax, other.xmax),
            min(self.ymax, other.ymax),
        )


def polyline_length(pts: np.ndarray) -> float:
    pts = np.asarray(pts, dtype=float)
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


def point_segment_distance(pts, a, b) -> np.ndarray:
    """Distances from points (P,2) to segments a->b given as (S,2) arrays.

    Returns a (P, S) array.
    """
    pts = np.atleast_2d(pts)[:, None, :]
    a = np.atleast_2d(a)[None, :, :]
    b = np.atleast_2d(b)[None, :, :]
    ab = b - a
    denom = np.einsum("...i,...i", ab, ab)
    t = np.einsum("...i,...i", pts - a, ab) / np.where(denom > 0, denom, 1.0)
    t = np.clip(t, 0.0, 1.0)
    proj = a + t[..., None] * ab
    return np.linalg.norm(pts - proj, axis=-1)


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def segments_intersect(p1, p2, q1, q2, tol: float = 0.0) -> bool:
    """Closed-segment intersection test, including touching."""
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > tol and d2 < -tol) or (d1 < -tol and d2 > tol)) and (
        (d3 > tol and d4 < -tol) or (d3 < -tol and d4 > tol)
    ):
        return True
    dist = point_segment_distance(
        np.array([p1, p2, q1, q2]),
        np.array([q1, q1, p1, p1]),
        np.array([q2, q2, p2, p2]),
    )
    return bool(np.any(np.diag(dist) <= max(tol, 1e-14)))


def segment_distance(p1, p2, q1, q2) -> float:
    if segments_intersect(p1, p2, q1, q2):
        return 0.0
    d = point_segment_distance(
        np.array([p1, p2, q1, q2]),
        np.array([q1, q1, p1, p1]),
        np.array([q2, q2, p2, p2]),
    )
    return float(np.diag(d).min())


@dataclass(frozen=True)
class FractureNetwork:
    """Non-intersecting open polylines; tip 0 is the first vertex, tip 1 the last."""

    fractures: tuple = ()
    tip_ids: tuple = field(default=())

    def __post_init__(self):
        fr = tuple(np.array(f, dtype=float).reshape(-1, 2) for f in self.fractures)
        for k, f in enumerate(fr):
            if len(f) < 2:
                raise GeometryError(f"fracture {k} needs at least two vertices")
            seg = np.linalg.norm(np.diff(f, axis=0), axis=1)
            if np.any(seg <= 0.0):
                raise GeometryError(f"fracture {k} has repeated consecutive vertices")
        object.__setattr__(self, "fractures", fr)
        tips = tuple(self.tip_ids) if self.tip_ids else ()
        if not tips:
            tips = tuple((f"F{k}.0", f"F{k}.1") for k in range(len(fr)))
        if len(tips) != len(fr):
            raise GeometryError("tip_ids must have one pair per fracture")
        object.__setattr__(self, "tip_ids", tuple(tuple(t) for t in tips))

    def __len__(self) -> int:
        return len(self.fractures)

    def tips(self):
        """Yield (tip_id, fracture index, end index 0|1, coordinate)."""
        for k, f in enumerate(self.fractures):
            yield self.tip_ids[k][0], k, 0, f[0].copy()
            yield self.tip_ids[k][1], k, 1, f[-1].copy()

    def segments(self):
        """All segments as (S,2,2) with owning fracture index (S,)."""
        segs, owner = [], []
        for k, f in enumerate(self.fractures):
            segs.append(np.stack([f[:-1], f[1:]], axis=1))
            owner.append(np.full(len(f) - 1, k))
        if not segs:
            return np.zeros((0, 2, 2)), np.zeros(0, dtype=int)
        return np.concatenate(segs), np.concatenate(owner)

    def lengths(self) -> np.ndarray:
        return np.array([polyline_length(f) for f in self.fractures])

    def validate(self, domain: Rectangle, h: float | None = None) -> None:
        """Raise GeometryError for intersections, exits, or near-tangent fractures."""
        for k, f in enumerate(self.fractures):
            if np.any(domain.distance_to_boundary(f) <= 0.0):
                raise GeometryError(f"fracture {k} is not strictly inside the domain")
        segs, owner = self.segments()
        n = len(segs)
        guard = 0.25 * h if h is not None else 0.0
        for i in range(n):
            for j in range(i + 1, n):
                same = owner[i] == owner[j]
                if same and j == i + 1:
                    # adjacent segments may only share their joint vertex
                    a, b = segs[i]
                    c = segs[j][1]
                    if abs(_orient(a, b, c)) <= 1e-14 * max(1.0, np.dot(b - a, b - a)):
                        if np.dot(b - a, c - b) < 0:
                            raise GeometryError(f"fracture {owner[i]} folds back on itself")
                    continue
                if segments_intersect(segs[i][0], segs[i][1], segs[j][0], segs[j][1]):
                    kind = "itself" if same else f"fracture {owner[j]}"
                    raise GeometryError(f"fracture {owner[i]} intersects {kind}")
                if not same and guard > 0.0:
                    d = segment_distance(segs[i][0], segs[i][1], segs[j][0], segs[j][1])
                    if d < guard:
                        raise GeometryError(
                            f"fractures {owner[i]} and {owner[j]} are {d:.3g} m apart, "
                            f"closer than h/4 = {guard:.3g} m"
                        )

    def replace(self, k: int, pts) -> "FractureNetwork":
        fr = list(self.fractures)
        fr[k] = np.asarray(pts, dtype=float)
        return FractureNetwork(tuple(fr), self.tip_ids)
