"""Planar contact geometry: hulls, polygon cropping, line fits, plane intersection.

Points are float64 numpy arrays of shape (2,) in a named planar frame (a foot
sole frame or the world ground frame). Polygons are convex, counter-clockwise,
and may be degenerate (1-2 distinct vertices) to represent point and line
contacts with the same interface as full footholds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Single tolerance knob for all geometric predicates (meters).
GEOMETRY_EPS = 1e-9

# Maximum outward excursion allowed when merging polygon corners (meters).
CORNER_MERGE_DILATION = 5e-3


class GeometryError(ValueError):
    pass


class EmptyPointSet(GeometryError):
    pass


class EmptyFoothold(GeometryError):
    pass


class DegenerateFit(GeometryError):
    pass


class ParallelPlanes(GeometryError):
    pass


def as_point(x, y=None):
    """Coerce to a (2,) float array."""
    if y is None:
        p = np.asarray(x, dtype=float).reshape(2)
    else:
        p = np.array([x, y], dtype=float)
    return p


def _cross2(a, b):
    return a[0] * b[1] - a[1] * b[0]


@dataclass(frozen=True)
class Line2:
    """Infinite 2D line through `point` along unit `direction`."""

    point: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.point, dtype=float).reshape(2)
        d = np.asarray(self.direction, dtype=float).reshape(2)
        n = float(np.linalg.norm(d))
        if n < GEOMETRY_EPS:
            raise GeometryError("line direction has zero length")
        object.__setattr__(self, "point", p)
        object.__setattr__(self, "direction", d / n)

    def signed_offset(self, p) -> float:
        """Perpendicular offset of p from the line (positive on the left of direction)."""
        return float(_cross2(self.direction, np.asarray(p, dtype=float) - self.point))

    def distance(self, p) -> float:
        return abs(self.signed_offset(p))


@dataclass(frozen=True)
class Plane3:
    """3D plane through `point` with unit `normal`."""

    point: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.point, dtype=float).reshape(3)
        n = np.asarray(self.normal, dtype=float).reshape(3)
        norm = float(np.linalg.norm(n))
        if abs(norm - 1.0) > 1e-9:
            if norm < GEOMETRY_EPS:
                raise GeometryError("plane normal has zero length")
            n = n / norm
        object.__setattr__(self, "point", p)
        object.__setattr__(self, "normal", n)


@dataclass(frozen=True)
class FootholdPolygon:
    """Convex planar support region, CCW vertices. Degenerate contacts keep the
    same type: a point is one vertex, a line segment two."""

    vertices: np.ndarray
    frame: str = "sole"

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        if v.shape[0] < 1:
            raise EmptyFoothold("polygon needs at least one vertex")
        if not np.all(np.isfinite(v)):
            raise GeometryError("polygon vertices must be finite")
        object.__setattr__(self, "vertices", v)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    def area(self) -> float:
        cached = getattr(self, "_area_cache", None)
        if cached is not None:
            return cached
        v = self.vertices
        if v.shape[0] < 3:
            a = 0.0
        else:
            x, y = v[:, 0], v[:, 1]
            s = float(x[:-1] @ y[1:] - y[:-1] @ x[1:]) + float(x[-1] * y[0] - y[-1] * x[0])
            a = 0.5 * s
        object.__setattr__(self, "_area_cache", a)
        return a

    def centroid(self) -> np.ndarray:
        cached = getattr(self, "_centroid_cache", None)
        if cached is not None:
            return cached.copy()
        v = self.vertices
        a = self.area()
        if v.shape[0] < 3 or a < GEOMETRY_EPS**0.5 * 1e-3:
            c = v.mean(axis=0)
        else:
            x, y = v[:, 0], v[:, 1]
            xn, yn = np.roll(x, -1), np.roll(y, -1)
            w = x * yn - xn * y
            c = np.array([float(np.sum((x + xn) * w)), float(np.sum((y + yn) * w))]) / (6.0 * a)
        object.__setattr__(self, "_centroid_cache", c)
        return c.copy()

    def contains(self, p, tol: float = GEOMETRY_EPS) -> bool:
        return self.signed_distance(p) <= tol

    def _edges(self):
        """Cached edge arrays (a, ab, inv_len2, unit) for vectorized queries."""
        cached = getattr(self, "_edge_cache", None)
        if cached is not None:
            return cached
        v = self.vertices
        n = v.shape[0]
        if n == 2:
            a = v[:1]
            b = v[1:2]
        else:
            a = v
            b = np.roll(v, -1, axis=0)
        ab = b - a
        len2 = np.einsum("ij,ij->i", ab, ab)
        cached = (a, ab, np.where(len2 > GEOMETRY_EPS**2, 1.0 / np.maximum(len2, 1e-300), 0.0), len2)
        object.__setattr__(self, "_edge_cache", cached)
        return cached

    def _rect(self):
        """(min, max) corners when the polygon is an axis-aligned rectangle,
        else None; cached."""
        cached = getattr(self, "_rect_cache", -1)
        if cached != -1:
            return cached
        v = self.vertices
        out = None
        if v.shape[0] == 4:
            ab = np.roll(v, -1, axis=0) - v
            if np.all(np.minimum(np.abs(ab[:, 0]), np.abs(ab[:, 1])) < 1e-12) and self.area() > 0:
                out = (v.min(axis=0), v.max(axis=0))
        object.__setattr__(self, "_rect_cache", out)
        return out

    def _obb(self):
        """(center, u1, u2, h1, h2) when the polygon is a (rotated) rectangle,
        else None; cached. Strips from line estimates hit this path."""
        cached = getattr(self, "_obb_cache", -1)
        if cached != -1:
            return cached
        v = self.vertices
        out = None
        if v.shape[0] == 4:
            e1 = v[1] - v[0]
            e2 = v[2] - v[1]
            l1 = math.hypot(e1[0], e1[1])
            l2 = math.hypot(e2[0], e2[1])
            if (
                l1 > GEOMETRY_EPS
                and l2 > GEOMETRY_EPS
                and abs(float(e1 @ e2)) < 1e-9 * l1 * l2
                and np.allclose(v[3] - v[0], e2, atol=1e-12)
            ):
                out = (0.25 * v.sum(axis=0), e1 / l1, e2 / l2, l1 / 2, l2 / 2)
        object.__setattr__(self, "_obb_cache", out)
        return out

    def signed_distance(self, p) -> float:
        """Distance to the polygon boundary, negative inside. Degenerate
        polygons have no interior, so the result is always >= 0 for them."""
        p = np.asarray(p, dtype=float).reshape(2)
        v = self.vertices
        n = v.shape[0]
        if n == 1:
            return float(np.hypot(p[0] - v[0, 0], p[1] - v[0, 1]))
        if n == 2:
            return _point_segment_distance(p, v[0], v[1])
        rect = self._rect()
        if rect is not None:
            (x0, y0), (x1, y1) = rect
            dx = max(x0 - p[0], p[0] - x1)
            dy = max(y0 - p[1], p[1] - y1)
            if dx <= 0.0 and dy <= 0.0:
                return max(dx, dy)
            return math.hypot(max(dx, 0.0), max(dy, 0.0))
        obb = self._obb()
        if obb is not None:
            c, u1, u2, h1, h2 = obb
            rx = p[0] - c[0]
            ry = p[1] - c[1]
            dx = abs(rx * u1[0] + ry * u1[1]) - h1
            dy = abs(rx * u2[0] + ry * u2[1]) - h2
            if dx <= 0.0 and dy <= 0.0:
                return max(dx, dy)
            return math.hypot(max(dx, 0.0), max(dy, 0.0))
        a, ab, inv_len2, _ = self._edges()
        rel = p - a
        t = np.clip(np.einsum("ij,ij->i", rel, ab) * inv_len2, 0.0, 1.0)
        q = a + t[:, None] * ab
        d = np.hypot(p[0] - q[:, 0], p[1] - q[:, 1])
        d_bound = float(d.min())
        if n < 3 or self.area() <= 0.0:
            return d_bound
        cross = ab[:, 0] * rel[:, 1] - ab[:, 1] * rel[:, 0]
        inside = bool(np.all(cross >= -GEOMETRY_EPS))
        return -d_bound if inside else d_bound

    def closest_boundary_point(self, p):
        """Nearest boundary point to p plus local edge info.

        Returns (point, edge_dir, at_vertex): edge_dir is the unit direction of
        the boundary edge the point lies on (None for a single-vertex polygon),
        at_vertex is True when the nearest point is a polygon corner.
        """
        p = np.asarray(p, dtype=float).reshape(2)
        v = self.vertices
        n = v.shape[0]
        if n == 1:
            return v[0].copy(), None, True
        if n == 2:
            ab = v[1] - v[0]
            len2 = float(ab @ ab)
            if len2 < GEOMETRY_EPS**2:
                return v[0].copy(), None, True
            t = min(max(float((p - v[0]) @ ab) / len2, 0.0), 1.0)
            q = v[0] + t * ab
            return q, ab / math.sqrt(len2), t <= 1e-12 or t >= 1.0 - 1e-12
        a, ab, inv_len2, len2 = self._edges()
        rel = p - a
        t = np.clip(np.einsum("ij,ij->i", rel, ab) * inv_len2, 0.0, 1.0)
        q = a + t[:, None] * ab
        d2 = (p[0] - q[:, 0]) ** 2 + (p[1] - q[:, 1]) ** 2
        i = int(np.argmin(d2))
        nrm = math.sqrt(len2[i])
        edge_dir = ab[i] / nrm if nrm > GEOMETRY_EPS else None
        at_vertex = t[i] <= 1e-12 or t[i] >= 1.0 - 1e-12
        return q[i].copy(), edge_dir, at_vertex

    def clamp(self, p, margin: float = 0.0) -> np.ndarray:
        """Project p into the polygon, optionally keeping `margin` off the boundary."""
        p = np.asarray(p, dtype=float).reshape(2)
        rect = self._rect()
        if rect is not None:
            (x0, y0), (x1, y1) = rect
            mx = min(margin, 0.5 * (x1 - x0))
            my = min(margin, 0.5 * (y1 - y0))
            return np.array([min(max(p[0], x0 + mx), x1 - mx),
                             min(max(p[1], y0 + my), y1 - my)])
        obb = self._obb()
        if obb is not None:
            c, u1, u2, h1, h2 = obb
            rx = p[0] - c[0]
            ry = p[1] - c[1]
            a1 = min(max(rx * u1[0] + ry * u1[1], -h1 + min(margin, h1)), h1 - min(margin, h1))
            a2 = min(max(rx * u2[0] + ry * u2[1], -h2 + min(margin, h2)), h2 - min(margin, h2))
            return c + a1 * u1 + a2 * u2
        sd = self.signed_distance(p)
        if sd <= -margin:
            return p.copy()
        q, _, _ = self.closest_boundary_point(p)
        if margin <= 0.0:
            return q
        c = self.centroid()
        inward = c - q
        nrm = float(np.linalg.norm(inward))
        if nrm < GEOMETRY_EPS:
            return q
        depth = -self.signed_distance(c)
        return q + inward / nrm * min(margin, max(depth - GEOMETRY_EPS, 0.0))

    def deepest_point(self) -> np.ndarray:
        """Interior point farthest from the boundary (approximate; exact for
        the rectangles and strips used as footholds)."""
        c = self.centroid()
        best, best_d = c, -self.signed_distance(c)
        v = self.vertices
        n = v.shape[0]
        if n >= 3:
            for i in range(n):
                for j in range(i + 1, n):
                    m = 0.5 * (v[i] + v[j])
                    q = 0.5 * (m + c)
                    for cand in (m, q):
                        d = -self.signed_distance(cand)
                        if d > best_d:
                            best, best_d = cand, d
        return np.asarray(best, dtype=float)

    def validate(self) -> None:
        """Raise GeometryError when convexity/ordering invariants are broken."""
        v = self.vertices
        n = v.shape[0]
        if n < 3:
            return
        for i in range(n):
            a = v[i]
            b = v[(i + 1) % n]
            c = v[(i + 2) % n]
            if _cross2(b - a, c - b) < -1e-10:
                raise GeometryError("polygon is not convex CCW")

    def to_json(self) -> dict:
        return {"frame": self.frame, "vertices": self.vertices.tolist()}

    @staticmethod
    def from_json(obj: dict) -> "FootholdPolygon":
        return FootholdPolygon(np.asarray(obj["vertices"], dtype=float), obj.get("frame", "sole"))


@dataclass(frozen=True)
class Transform2:
    """Rigid 2D transform (rotation by yaw, then translation)."""

    yaw: float = 0.0
    translation: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float).reshape(2))

    @property
    def rotation(self) -> np.ndarray:
        cached = getattr(self, "_rot_cache", None)
        if cached is None:
            c, s = math.cos(self.yaw), math.sin(self.yaw)
            cached = np.array([[c, -s], [s, c]])
            object.__setattr__(self, "_rot_cache", cached)
        return cached

    def apply(self, p) -> np.ndarray:
        return self.rotation @ np.asarray(p, dtype=float).reshape(2) + self.translation

    def apply_many(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        return pts @ self.rotation.T + self.translation

    def apply_dir(self, d) -> np.ndarray:
        return self.rotation @ np.asarray(d, dtype=float).reshape(2)

    def apply_line(self, line: Line2) -> Line2:
        return Line2(self.apply(line.point), self.apply_dir(line.direction))

    def apply_polygon(self, poly: FootholdPolygon, frame: str) -> FootholdPolygon:
        return FootholdPolygon(self.apply_many(poly.vertices), frame)

    def inverse(self) -> "Transform2":
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        r_inv = np.array([[c, s], [-s, c]])
        return Transform2(-self.yaw, -(r_inv @ self.translation))


def _point_segment_distance(p, a, b) -> float:
    abx, aby = b[0] - a[0], b[1] - a[1]
    len2 = abx * abx + aby * aby
    if len2 < GEOMETRY_EPS**2:
        return math.hypot(p[0] - a[0], p[1] - a[1])
    t = ((p[0] - a[0]) * abx + (p[1] - a[1]) * aby) / len2
    t = min(max(t, 0.0), 1.0)
    return math.hypot(p[0] - a[0] - t * abx, p[1] - a[1] - t * aby)


def convex_hull(points, frame: str = "sole") -> FootholdPolygon:
    """Convex hull of 2D points (monotone chain), CCW with collinear interior
    vertices removed. Degenerate inputs give 1- or 2-vertex polygons."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if pts.shape[0] == 0:
        raise EmptyPointSet("convex hull of empty point set")
    if not np.all(np.isfinite(pts)):
        raise GeometryError("points must be finite")
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]
    keep = [0]
    for i in range(1, pts.shape[0]):
        if np.linalg.norm(pts[i] - pts[keep[-1]]) > GEOMETRY_EPS:
            keep.append(i)
    pts = pts[keep]
    n = pts.shape[0]
    if n == 1:
        return FootholdPolygon(pts[:1], frame)
    if n == 2:
        return FootholdPolygon(pts, frame)

    def chain(seq):
        # Strict turns only: tolerance-based popping can cascade and drop true
        # vertices; near-collinear cleanup happens in a local postpass.
        out = []
        for p in seq:
            while len(out) >= 2 and _cross2(out[-1] - out[-2], p - out[-2]) <= 0.0:
                out.pop()
            out.append(p)
        return out

    lower = chain(pts)
    upper = chain(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    if hull.shape[0] < 3:
        # All points collinear: keep the farthest pair (lexicographic extremes
        # can be nearly coincident when the line runs along y).
        d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        i, j = np.unravel_index(int(np.argmax(d2)), d2.shape)
        return FootholdPolygon(np.array([pts[min(i, j)], pts[max(i, j)]]), frame)
    hull = _drop_collinear(hull)
    if hull.shape[0] == 2:
        return FootholdPolygon(hull, frame)
    return FootholdPolygon(hull, frame)


def _drop_collinear(hull: np.ndarray) -> np.ndarray:
    """Remove vertices within GEOMETRY_EPS of the segment joining their
    neighbors; each removal moves the boundary by at most that epsilon. The
    segment (not line) test keeps extreme vertices of degenerate rings."""
    changed = True
    while changed and hull.shape[0] > 2:
        changed = False
        n = hull.shape[0]
        for i in range(n):
            a = hull[(i - 1) % n]
            b = hull[i]
            c = hull[(i + 1) % n]
            if _point_segment_distance(b, a, c) <= GEOMETRY_EPS:
                hull = np.delete(hull, i, axis=0)
                changed = True
                break
    return hull


def crop_polygon(p: FootholdPolygon, cut: Line2, keep) -> FootholdPolygon:
    """Intersect polygon with the closed half-plane bounded by `cut` that
    contains `keep`. Points exactly on the cut line are retained."""
    keep = np.asarray(keep, dtype=float).reshape(2)
    s_keep = cut.signed_offset(keep)
    if abs(s_keep) <= GEOMETRY_EPS:
        raise GeometryError("keep point lies on the cut line")
    sign = 1.0 if s_keep > 0 else -1.0

    v = p.vertices
    n = v.shape[0]
    offs = np.array([sign * cut.signed_offset(q) for q in v])
    if n == 1:
        if offs[0] >= -GEOMETRY_EPS:
            return p
        raise EmptyFoothold("point contact on removed side")
    if n == 2:
        return _crop_segment(v, offs, p.frame)

    out = []
    for i in range(n):
        a, b = v[i], v[(i + 1) % n]
        oa, ob = offs[i], offs[(i + 1) % n]
        if oa >= -GEOMETRY_EPS:
            out.append(a)
            if ob < -GEOMETRY_EPS and oa > GEOMETRY_EPS:
                out.append(_edge_line_intersection(a, b, oa, ob))
        elif ob > GEOMETRY_EPS:
            out.append(_edge_line_intersection(a, b, oa, ob))
    if not out:
        raise EmptyFoothold("crop removed the whole polygon")
    out = _dedupe_ring(np.array(out))
    if out.shape[0] == 0:
        raise EmptyFoothold("crop removed the whole polygon")
    return FootholdPolygon(out, p.frame)


def _crop_segment(v, offs, frame):
    a, b = v[0], v[1]
    oa, ob = offs[0], offs[1]
    if oa >= -GEOMETRY_EPS and ob >= -GEOMETRY_EPS:
        return FootholdPolygon(v.copy(), frame)
    if oa < -GEOMETRY_EPS and ob < -GEOMETRY_EPS:
        raise EmptyFoothold("segment entirely on removed side")
    x = _edge_line_intersection(a, b, oa, ob)
    kept = a if oa >= -GEOMETRY_EPS else b
    if np.linalg.norm(kept - x) <= GEOMETRY_EPS:
        return FootholdPolygon(x.reshape(1, 2), frame)
    return FootholdPolygon(np.array([kept, x]), frame)


def _edge_line_intersection(a, b, oa, ob):
    t = oa / (oa - ob)
    return a + t * (b - a)


def _dedupe_ring(v: np.ndarray) -> np.ndarray:
    if v.shape[0] <= 1:
        return v
    out = [v[0]]
    for q in v[1:]:
        if np.linalg.norm(q - out[-1]) > GEOMETRY_EPS:
            out.append(q)
    while len(out) > 1 and np.linalg.norm(out[0] - out[-1]) <= GEOMETRY_EPS:
        out.pop()
    return np.array(out)


def intersect_convex(p: FootholdPolygon, q: FootholdPolygon) -> FootholdPolygon:
    """Intersection of two convex polygons (p possibly degenerate), obtained by
    clipping p against each edge half-plane of q. Raises EmptyFoothold when
    the regions do not overlap."""
    if q.n_vertices < 3:
        raise GeometryError("clip polygon must have an interior")
    out = p
    qc = q.centroid()
    v = q.vertices
    n = v.shape[0]
    for i in range(n):
        a, b = v[i], v[(i + 1) % n]
        edge = b - a
        line = Line2(a, edge)
        if line.distance(qc) <= GEOMETRY_EPS:
            continue
        out = crop_polygon(out, line, qc)
    return out


def fit_line_weighted(points, weights) -> Line2:
    """Weighted total-least-squares line: principal axis of the weighted
    covariance about the weighted centroid. Rotation invariant."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if pts.shape[0] < 2:
        raise DegenerateFit("need at least two points")
    if w.shape[0] != pts.shape[0]:
        raise GeometryError("weights length mismatch")
    if np.any(w < 0):
        raise GeometryError("weights must be non-negative")
    wsum = float(w.sum())
    if wsum <= 0:
        raise GeometryError("weights must not all be zero")
    c = (w[:, None] * pts).sum(axis=0) / wsum
    d = pts - c
    cov = (w[:, None] * d).T @ d / wsum
    # Principal eigenvector of the symmetric 2x2, closed form.
    cxx, cxy, cyy = cov[0, 0], cov[0, 1], cov[1, 1]
    tr = cxx + cyy
    if tr < (GEOMETRY_EPS) ** 2:
        raise DegenerateFit("all points coincident")
    theta = 0.5 * math.atan2(2.0 * cxy, cxx - cyy)
    direction = np.array([math.cos(theta), math.sin(theta)])
    # atan2 form gives the major axis; verify against the minor one.
    other = np.array([-direction[1], direction[0]])
    if direction @ cov @ direction < other @ cov @ other:
        direction = other
    if direction[0] < 0 or (direction[0] == 0 and direction[1] < 0):
        direction = -direction
    return Line2(c, direction)


def lines_equal(a: Line2, b: Line2, tol: float = 1e-9) -> bool:
    """Same line as a point set: directions parallel, points mutually on-line."""
    if abs(_cross2(a.direction, b.direction)) > tol:
        return False
    return a.distance(b.point) <= tol and b.distance(a.point) <= tol


def plane_intersection(foot: Plane3, ground: Plane3):
    """Intersection line of two planes, projected to the planar frame both are
    expressed in, plus the angle between the planes in [0, pi/2]."""
    n1, n2 = foot.normal, ground.normal
    c = np.cross(n1, n2)
    cn = float(np.linalg.norm(c))
    if cn < 1e-8:
        raise ParallelPlanes("planes are parallel")
    theta = math.atan2(cn, abs(float(n1 @ n2)))
    # Point on both planes with minimal norm: p = a*n1 + b*n2.
    d1 = float(n1 @ foot.point)
    d2 = float(n2 @ ground.point)
    dot = float(n1 @ n2)
    det = 1.0 - dot * dot
    a = (d1 - d2 * dot) / det
    b = (d2 - d1 * dot) / det
    p3 = a * n1 + b * n2
    dir2 = c[:2]
    nrm2 = float(np.linalg.norm(dir2))
    if nrm2 < 1e-12:
        raise GeometryError("intersection axis is not in the ground plane")
    return Line2(p3[:2], dir2 / nrm2), theta


def reduce_to_four_corners(p: FootholdPolygon) -> FootholdPolygon:
    """Approximate a convex polygon with exactly four corners.

    Two candidate reductions are computed and the larger-area one returned:
    greedy adjacent-pair merging (replacement vertex from the neighboring edge
    extensions when that stays within CORNER_MERGE_DILATION of the hull, else
    the pair midpoint), and the best inscribed quadrilateral over all 4-vertex
    subsets. The merge route keeps nearly all area for cropped rectangular
    soles; the subset route wins on rounder shapes where outward merges are
    blocked by the dilation cap. Degenerate contacts pad repeated vertices.
    """
    v = _dedupe_ring(p.vertices)
    n = v.shape[0]
    if n == 1:
        return FootholdPolygon(np.repeat(v, 4, axis=0), p.frame)
    if n == 2:
        return FootholdPolygon(v[[0, 0, 1, 1]], p.frame)
    if n == 3:
        return FootholdPolygon(v[[0, 1, 2, 2]], p.frame)
    if n == 4:
        return FootholdPolygon(v, p.frame)

    merged = _reduce_by_merging(v, p.frame)
    inscribed = _best_four_subset(v, p.frame)
    if inscribed is not None and inscribed.area() > merged.area():
        return inscribed
    return merged


def _reduce_by_merging(v: np.ndarray, frame: str) -> FootholdPolygon:
    hull = FootholdPolygon(v, frame)
    while v.shape[0] > 4:
        n = v.shape[0]
        best_verts, best_area = None, -math.inf
        for i in range(n):
            j = (i + 1) % n
            prev_v = v[(i - 1) % n]
            next_v = v[(j + 1) % n]
            for cand in _merge_candidates(prev_v, v[i], v[j], next_v, hull):
                new_v = np.array([cand if k == i else v[k] for k in range(n) if k != j])
                area = FootholdPolygon(new_v, frame).area()
                if area > best_area:
                    best_area, best_verts = area, new_v
        v = _dedupe_ring(best_verts)
        if v.shape[0] < 3:
            break
    n = v.shape[0]
    if n < 4:
        pad = {1: [0, 0, 0, 0], 2: [0, 0, 1, 1], 3: [0, 1, 2, 2]}[n]
        v = v[pad]
    return FootholdPolygon(v, frame)


def _best_four_subset(v: np.ndarray, frame: str):
    n = v.shape[0]
    if n > 16:
        return None
    x, y = v[:, 0], v[:, 1]
    best, best_idx = -math.inf, None
    for i in range(n - 3):
        for j in range(i + 1, n - 2):
            for k in range(j + 1, n - 1):
                for l in range(k + 1, n):
                    idx = (i, j, k, l)
                    xs = x[list(idx)]
                    ys = y[list(idx)]
                    area = 0.5 * abs(
                        xs[0] * (ys[1] - ys[3])
                        + xs[1] * (ys[2] - ys[0])
                        + xs[2] * (ys[3] - ys[1])
                        + xs[3] * (ys[0] - ys[2])
                    )
                    if area > best:
                        best, best_idx = area, idx
    if best_idx is None:
        return None
    return FootholdPolygon(v[list(best_idx)], frame)


def _merge_candidates(prev_v, a, b, next_v, hull: FootholdPolygon):
    cands = [0.5 * (a + b)]
    e1 = a - prev_v
    e2 = b - next_v
    denom = _cross2(e1, e2)
    if abs(denom) > GEOMETRY_EPS:
        # Intersection of the extended neighbor edges: prev_v + t*e1 = next_v + s*e2
        t = _cross2(next_v - prev_v, e2) / denom
        s = _cross2(next_v - prev_v, e1) / denom
        if t >= 1.0 - 1e-12 and s >= 1.0 - 1e-12:
            x = prev_v + t * e1
            if hull.signed_distance(x) <= CORNER_MERGE_DILATION:
                cands.append(x)
    return cands
