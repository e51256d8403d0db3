"""Planar geometry primitives and seeded spatial samplers.

Coordinates are (longitude, latitude) degree pairs. Regions are small enough
that areas and uniform sampling are computed in planar lon/lat coordinates;
great-circle distance is used wherever physical kilometres matter (polyline
segment lengths, gravity weights).

All samplers are pure functions of their inputs and an explicit
``numpy.random.Generator``: the same seed yields bitwise-identical output,
which makes per-region generation safe to run concurrently with independent
streams.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

EARTH_RADIUS_KM = 6371.0

# Tolerance in degrees for "point lies on a boundary" tests.
_BOUNDARY_EPS = 1e-12

__all__ = [
    "EARTH_RADIUS_KM",
    "GeometryError",
    "GeoPoint",
    "PolygonRegion",
    "Polyline",
    "WeightedGeometrySet",
    "point_in_polygon",
    "points_in_polygon",
    "polygon_area",
    "triangulate",
    "sample_uniform_polygon",
    "sample_uniform_polylines",
    "sample_weighted_geometry",
    "great_circle_distance",
    "great_circle_km",
]


class GeometryError(ValueError):
    """Raised for degenerate or invalid geometric input."""


class GeoPoint:
    """A longitude/latitude pair in degrees, validated on construction."""

    __slots__ = ("longitude", "latitude")

    def __init__(self, longitude: float, latitude: float):
        longitude = float(longitude)
        latitude = float(latitude)
        if not (math.isfinite(longitude) and math.isfinite(latitude)):
            raise GeometryError(f"non-finite coordinates ({longitude}, {latitude})")
        if not -180.0 <= longitude <= 180.0:
            raise GeometryError(f"longitude {longitude} outside [-180, 180]")
        if not -90.0 <= latitude <= 90.0:
            raise GeometryError(f"latitude {latitude} outside [-90, 90]")
        object.__setattr__(self, "longitude", longitude)
        object.__setattr__(self, "latitude", latitude)

    def __setattr__(self, name, value):
        raise AttributeError("GeoPoint is immutable")

    def __reduce__(self):
        return (GeoPoint, (self.longitude, self.latitude))

    def __iter__(self):
        return iter((self.longitude, self.latitude))

    def __eq__(self, other):
        if not isinstance(other, GeoPoint):
            return NotImplemented
        return self.longitude == other.longitude and self.latitude == other.latitude

    def __hash__(self):
        return hash((self.longitude, self.latitude))

    def __repr__(self):
        return f"GeoPoint({self.longitude}, {self.latitude})"


def _as_ring(coords) -> np.ndarray:
    """Coerce a vertex sequence to an open (n, 2) float array.

    Accepts GeoPoints or (lon, lat) pairs. A closing vertex equal to the
    first is dropped, as are consecutive duplicate vertices.
    """
    if isinstance(coords, np.ndarray):
        ring = np.array(coords, dtype=float)
    else:
        pts = []
        for c in coords:
            if isinstance(c, GeoPoint):
                pts.append((c.longitude, c.latitude))
            else:
                pts.append((float(c[0]), float(c[1])))
        ring = np.array(pts, dtype=float)
    if ring.ndim != 2 or ring.shape[1] != 2 or len(ring) == 0:
        raise GeometryError("ring must be a non-empty sequence of (lon, lat) pairs")
    if not np.all(np.isfinite(ring)):
        raise GeometryError("ring contains non-finite coordinates")
    if len(ring) >= 2 and np.array_equal(ring[0], ring[-1]):
        ring = ring[:-1]
    # drop consecutive duplicates
    keep = np.ones(len(ring), dtype=bool)
    keep[1:] = np.any(ring[1:] != ring[:-1], axis=1)
    return ring[keep]


def _signed_area(ring: np.ndarray) -> float:
    """Shoelace area; positive for counter-clockwise rings."""
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _oriented(ring: np.ndarray, ccw: bool) -> np.ndarray:
    if (_signed_area(ring) > 0) != ccw:
        return ring[::-1].copy()
    return ring


class PolygonRegion:
    """Simple polygon with optional holes.

    The exterior ring is stored counter-clockwise and holes clockwise;
    rings may be given closed or open and in either orientation.
    """

    __slots__ = ("exterior", "holes", "_bbox")

    def __init__(self, exterior, holes: Iterable = ()):
        self.exterior = _oriented(_as_ring(exterior), ccw=True)
        self.holes = [_oriented(_as_ring(h), ccw=False) for h in holes]
        if len(np.unique(self.exterior, axis=0)) < 3:
            raise GeometryError("exterior ring needs at least 3 distinct vertices")
        if abs(_signed_area(self.exterior)) <= 0.0:
            raise GeometryError("exterior ring has zero area")
        lon, lat = self.exterior[:, 0], self.exterior[:, 1]
        self._bbox = (float(lon.min()), float(lat.min()), float(lon.max()), float(lat.max()))
        for hole in self.holes:
            if len(hole) < 3:
                raise GeometryError("hole ring needs at least 3 vertices")
            inside, on_edge = _ring_contains(hole, self.exterior)
            if not np.all(inside | on_edge):
                raise GeometryError("hole vertex lies outside the exterior ring")

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        """(min_lon, min_lat, max_lon, max_lat) of the exterior ring."""
        return self._bbox

    def __eq__(self, other):
        if not isinstance(other, PolygonRegion):
            return NotImplemented
        return np.array_equal(self.exterior, other.exterior) and len(self.holes) == len(
            other.holes
        ) and all(np.array_equal(a, b) for a, b in zip(self.holes, other.holes))

    def __repr__(self):
        return f"PolygonRegion({len(self.exterior)} vertices, {len(self.holes)} holes)"


class Polyline:
    """Open chain of at least two vertices with great-circle segment lengths.

    ``excluded`` marks lines (e.g. interstate highways) that road-based
    samplers must skip.
    """

    __slots__ = ("vertices", "excluded", "segment_lengths_km", "total_length_km")

    def __init__(self, vertices, excluded: bool = False):
        pts = _as_ring(vertices)
        if len(pts) < 2:
            raise GeometryError("polyline needs at least 2 distinct vertices")
        self.vertices = pts
        self.excluded = bool(excluded)
        self.segment_lengths_km = great_circle_km(
            pts[:-1, 0], pts[:-1, 1], pts[1:, 0], pts[1:, 1]
        )
        self.total_length_km = float(self.segment_lengths_km.sum())
        if not self.total_length_km > 0:
            raise GeometryError("polyline has zero total length")

    def __eq__(self, other):
        if not isinstance(other, Polyline):
            return NotImplemented
        return np.array_equal(self.vertices, other.vertices) and self.excluded == other.excluded

    def __repr__(self):
        flag = ", excluded" if self.excluded else ""
        return f"Polyline({len(self.vertices)} vertices, {self.total_length_km:.3f} km{flag})"


class WeightedGeometrySet:
    """Geometries paired with sampling weights, normalized to probabilities."""

    __slots__ = ("items", "normalized_weights")

    def __init__(self, items: Sequence[tuple[PolygonRegion | Polyline, float]]):
        if len(items) == 0:
            raise GeometryError("weighted geometry set is empty")
        weights = np.array([float(w) for _, w in items], dtype=float)
        if np.any(~np.isfinite(weights)) or np.any(weights < 0):
            raise GeometryError("weights must be finite and nonnegative")
        total = weights.sum()
        if not total > 0:
            raise GeometryError("at least one weight must be positive")
        self.items = [(geom, float(w)) for geom, w in items]
        self.normalized_weights = weights / total
        assert abs(self.normalized_weights.sum() - 1.0) <= 1e-12


# ---------------------------------------------------------------------------
# containment
# ---------------------------------------------------------------------------

def _ring_contains(points: np.ndarray, ring: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ray-casting parity plus boundary test for each point against one ring.

    Returns (strictly-inside-by-parity, on-boundary) boolean arrays.
    """
    x = points[:, 0][:, None]
    y = points[:, 1][:, None]
    x1 = ring[:, 0][None, :]
    y1 = ring[:, 1][None, :]
    x2 = np.roll(ring[:, 0], -1)[None, :]
    y2 = np.roll(ring[:, 1], -1)[None, :]

    straddles = (y1 > y) != (y2 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = (x2 - x1) * (y - y1) / (y2 - y1) + x1
    inside = ((straddles & (x < x_cross)).sum(axis=1) % 2).astype(bool)

    cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
    seg2 = (x2 - x1) ** 2 + (y2 - y1) ** 2
    dot = (x - x1) * (x2 - x1) + (y - y1) * (y2 - y1)
    on_edge = (
        (cross**2 <= _BOUNDARY_EPS**2 * np.maximum(seg2, _BOUNDARY_EPS**2))
        & (dot >= -_BOUNDARY_EPS)
        & (dot <= seg2 + _BOUNDARY_EPS)
    ).any(axis=1)
    return inside, on_edge


def points_in_polygon(points, poly: PolygonRegion, chunk: int = 8192) -> np.ndarray:
    """Vectorized containment test; boundary points count as inside.

    A point inside a hole is outside the polygon, but points on a hole's
    boundary still belong to the region.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty(len(pts), dtype=bool)
    for lo in range(0, len(pts), chunk):
        block = pts[lo : lo + chunk]
        inside, on_edge = _ring_contains(block, poly.exterior)
        result = inside | on_edge
        for hole in poly.holes:
            h_in, h_on = _ring_contains(block, hole)
            result &= ~(h_in & ~h_on)
        out[lo : lo + chunk] = result
    return out


def point_in_polygon(p, poly: PolygonRegion) -> bool:
    """True iff ``p`` lies in the exterior ring and outside all holes."""
    if isinstance(p, GeoPoint):
        arr = np.array([[p.longitude, p.latitude]])
    else:
        arr = np.array([[float(p[0]), float(p[1])]])
    return bool(points_in_polygon(arr, poly)[0])


# ---------------------------------------------------------------------------
# area and triangulation
# ---------------------------------------------------------------------------

def _segments_properly_intersect(p1, p2, p3, p4) -> bool:
    """Strict crossing test: segment interiors intersect at a single point."""

    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(p3, p4, p1)
    d2 = orient(p3, p4, p2)
    d3 = orient(p1, p2, p3)
    d4 = orient(p1, p2, p4)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0 and d3 != 0 and d4 != 0


def _validate_simple_ring(ring: np.ndarray) -> None:
    n = len(ring)
    for i in range(n):
        a1, a2 = ring[i], ring[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            b1, b2 = ring[j], ring[(j + 1) % n]
            if _segments_properly_intersect(a1, a2, b1, b2):
                raise GeometryError(
                    f"self-intersecting ring: edges {i} and {j} cross"
                )


def polygon_area(poly: PolygonRegion) -> float:
    """Planar shoelace area of the exterior minus the holes.

    Raises GeometryError for self-intersecting rings or nonpositive area.
    """
    _validate_simple_ring(poly.exterior)
    area = abs(_signed_area(poly.exterior))
    for hole in poly.holes:
        _validate_simple_ring(hole)
        area -= abs(_signed_area(hole))
    if not area > 0:
        raise GeometryError("polygon has nonpositive area after removing holes")
    return area


def _point_in_triangle_inclusive(px, py, ax, ay, bx, by, cx, cy) -> bool:
    """Inclusive point-in-triangle for arbitrarily oriented triangles."""
    d1 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    d2 = (cx - bx) * (py - by) - (cy - by) * (px - bx)
    d3 = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
    has_neg = (d1 < 0) or (d2 < 0) or (d3 < 0)
    has_pos = (d1 > 0) or (d2 > 0) or (d3 > 0)
    return not (has_neg and has_pos)


def _ccw_cross(p, q, r) -> float:
    return (q[0] - p[0]) * (r[1] - q[1]) - (q[1] - p[1]) * (r[0] - q[0])


def _locally_inside(outer: list, i: int, b: tuple) -> bool:
    """True if the diagonal from outer[i] toward b starts inside the ring."""
    a = outer[i]
    prv = outer[i - 1]
    nxt = outer[(i + 1) % len(outer)]
    if _ccw_cross(prv, a, nxt) > 0:  # convex corner
        return _ccw_cross(a, b, nxt) <= 0 and _ccw_cross(a, prv, b) <= 0
    return _ccw_cross(a, b, prv) > 0 or _ccw_cross(a, nxt, b) > 0


def _bridge_hole(outer: list, hole: list) -> list:
    """Splice one hole into the outer ring through a visibility bridge.

    The bridge runs from the hole's leftmost vertex to a visible vertex of
    the outer ring, found by casting a leftward horizontal ray; the bridged
    vertices are duplicated so the combined ring stays simple.
    """
    im = min(range(len(hole)), key=lambda i: (hole[i][0], hole[i][1]))
    hx, hy = hole[im]

    n = len(outer)
    qx = -math.inf
    m_idx = -1
    touch = False
    for i in range(n):
        px, py = outer[i]
        nx_, ny_ = outer[(i + 1) % n]
        if py >= hy >= ny_ and ny_ != py:
            x = px + (hy - py) * (nx_ - px) / (ny_ - py)
            if x <= hx and x > qx:
                qx = x
                m_idx = i if px < nx_ else (i + 1) % n
                if x == hx:
                    touch = True
                    break
    if m_idx < 0:
        raise GeometryError("hole bridge not found; hole may lie outside the ring")

    if not touch:
        # the default candidate may be occluded: among ring vertices inside
        # the (ray hit, candidate, hole point) triangle, take the one whose
        # diagonal to the hole point makes the shallowest angle with the ray
        mx, my = outer[m_idx]
        if my > hy:
            tri = (qx, hy, mx, my, hx, hy)
        else:
            tri = (hx, hy, mx, my, qx, hy)
        best_tan = abs(hy - my) / (hx - mx) if hx != mx else math.inf
        for off in range(n):
            i = (m_idx + off) % n
            px, py = outer[i]
            if i == m_idx or not (mx <= px <= hx) or px == hx:
                continue
            if _point_in_triangle_inclusive(px, py, *tri):
                tan = abs(hy - py) / (hx - px)
                if _locally_inside(outer, i, (hx, hy)) and (
                    tan < best_tan or (tan == best_tan and px > outer[m_idx][0])
                ):
                    m_idx = i
                    best_tan = tan

    hole_cycle = hole[im:] + hole[:im]
    return (
        outer[: m_idx + 1]
        + hole_cycle
        + [hole_cycle[0], outer[m_idx]]
        + outer[m_idx + 1 :]
    )


def _ear_clip(ring: list, eps_area: float) -> list:
    """O(n^2) ear clipping of a simple (possibly keyholed) CCW ring."""
    verts = list(ring)
    tris = []
    stall = 0
    while len(verts) > 3:
        n = len(verts)
        clipped = False
        for i in range(n):
            ax, ay = verts[i - 1]
            bx, by = verts[i]
            cx, cy = verts[(i + 1) % n]
            cross = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
            if cross < -eps_area:
                continue  # reflex vertex
            if cross <= eps_area:
                # degenerate (collinear or spike): drop without emitting
                del verts[i]
                clipped = True
                break
            blocked = False
            for px, py in verts:
                if (px == ax and py == ay) or (px == bx and py == by) or (px == cx and py == cy):
                    continue
                if _point_in_triangle_inclusive(px, py, ax, ay, bx, by, cx, cy):
                    blocked = True
                    break
            if blocked:
                continue
            tris.append(((ax, ay), (bx, by), (cx, cy)))
            del verts[i]
            clipped = True
            break
        if not clipped:
            stall += 1
            if stall > 1:
                raise GeometryError("ear clipping stalled; polygon is not simple")
            # retry once with zero tolerance on the convexity test
            eps_area = 0.0
        else:
            stall = 0
    if len(verts) == 3:
        (ax, ay), (bx, by), (cx, cy) = verts
        if abs((bx - ax) * (cy - ay) - (by - ay) * (cx - ax)) > eps_area:
            tris.append(tuple(verts))
    return tris


def triangulate(poly: PolygonRegion) -> np.ndarray:
    """Triangulate exterior-minus-holes into an (n_tri, 3, 2) array.

    Holes are keyholed into the exterior ring first, then the combined ring
    is ear-clipped. The result is checked against the shoelace area to one
    part in 1e9; failure indicates invalid input and raises.
    """
    target_area = polygon_area(poly)
    span = max(
        poly.bbox[2] - poly.bbox[0],
        poly.bbox[3] - poly.bbox[1],
    )
    eps_area = max(span * span * 1e-14, 1e-300)

    ring = [tuple(v) for v in poly.exterior]
    holes = sorted(
        ([tuple(v) for v in hole] for hole in poly.holes),
        key=lambda h: min(h)[0] if h else math.inf,
    )
    for hole in holes:
        ring = _bridge_hole(ring, hole)

    tris = _ear_clip(ring, eps_area)
    out = np.array(tris, dtype=float).reshape(-1, 3, 2)
    tri_area = 0.5 * np.abs(
        (out[:, 1, 0] - out[:, 0, 0]) * (out[:, 2, 1] - out[:, 0, 1])
        - (out[:, 1, 1] - out[:, 0, 1]) * (out[:, 2, 0] - out[:, 0, 0])
    )
    if abs(tri_area.sum() - target_area) > 1e-9 * target_area:
        raise GeometryError(
            f"triangulation area {tri_area.sum():.12g} disagrees with "
            f"polygon area {target_area:.12g}"
        )
    return out


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------

def _sample_in_triangles(tris: np.ndarray, areas: np.ndarray, n: int, rng) -> np.ndarray:
    """Pick triangles by area weight, then sample uniformly inside each."""
    cum = np.cumsum(areas)
    pick = np.searchsorted(cum, rng.random(n) * cum[-1], side="right")
    pick = np.minimum(pick, len(areas) - 1)
    u = rng.random(n)
    v = rng.random(n)
    fold = u + v > 1.0
    u[fold] = 1.0 - u[fold]
    v[fold] = 1.0 - v[fold]
    a = tris[pick, 0]
    b = tris[pick, 1]
    c = tris[pick, 2]
    return a + u[:, None] * (b - a) + v[:, None] * (c - a)


def sample_uniform_polygon(poly: PolygonRegion, n: int, rng: np.random.Generator) -> np.ndarray:
    """Sample ``n`` points uniformly over the polygon's area.

    Triangulates exterior-minus-holes, picks a triangle with probability
    proportional to its area, and samples uniformly within it; there are no
    rejection loops, so the cost is deterministic in ``n``.

    Returns an (n, 2) array of (lon, lat) rows.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    tris = triangulate(poly)  # raises for degenerate polygons
    if n == 0:
        return np.empty((0, 2), dtype=float)
    areas = 0.5 * np.abs(
        (tris[:, 1, 0] - tris[:, 0, 0]) * (tris[:, 2, 1] - tris[:, 0, 1])
        - (tris[:, 1, 1] - tris[:, 0, 1]) * (tris[:, 2, 0] - tris[:, 0, 0])
    )
    return _sample_in_triangles(tris, areas, n, rng)


def sample_uniform_polylines(
    roads: Sequence[Polyline], n: int, rng: np.random.Generator
) -> np.ndarray:
    """Sample ``n`` points along road polylines.

    Segments are chosen with probability proportional to their great-circle
    length, then a point is placed uniformly along the chosen segment.
    Polylines flagged ``excluded`` contribute no segments.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    usable = [pl for pl in roads if not pl.excluded]
    if not usable:
        raise GeometryError("no usable polylines to sample from")
    starts = np.concatenate([pl.vertices[:-1] for pl in usable])
    ends = np.concatenate([pl.vertices[1:] for pl in usable])
    lengths = np.concatenate([pl.segment_lengths_km for pl in usable])
    total = lengths.sum()
    if not total > 0:
        raise GeometryError("polylines have zero total length")
    if n == 0:
        return np.empty((0, 2), dtype=float)
    cum = np.cumsum(lengths)
    seg = np.searchsorted(cum, rng.random(n) * total, side="right")
    seg = np.minimum(seg, len(lengths) - 1)
    t = rng.random(n)[:, None]
    return starts[seg] + t * (ends[seg] - starts[seg])


def sample_weighted_geometry(
    geoset: WeightedGeometrySet, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Sample ``n`` points from a weighted mix of polygons and polylines.

    An item is chosen per point by its normalized weight, then the item's
    own uniform sampler places the point. Output is grouped by item in set
    order. A single-item set delegates directly, drawing exactly the same
    stream as the underlying sampler would.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if len(geoset.items) == 1:
        return _sample_on_item(geoset.items[0][0], n, rng)
    counts = np.bincount(
        np.searchsorted(np.cumsum(geoset.normalized_weights), rng.random(n), side="right"),
        minlength=len(geoset.items),
    )
    parts = [
        _sample_on_item(geom, int(k), rng)
        for (geom, _), k in zip(geoset.items, counts)
        if k > 0
    ]
    if not parts:
        return np.empty((0, 2), dtype=float)
    return np.concatenate(parts)


def _sample_on_item(geom, n: int, rng) -> np.ndarray:
    if isinstance(geom, PolygonRegion):
        return sample_uniform_polygon(geom, n, rng)
    if isinstance(geom, Polyline):
        # weight was assigned explicitly, so the exclusion flag is moot here
        if n == 0:
            return np.empty((0, 2), dtype=float)
        cum = np.cumsum(geom.segment_lengths_km)
        seg = np.searchsorted(cum, rng.random(n) * cum[-1], side="right")
        seg = np.minimum(seg, len(cum) - 1)
        t = rng.random(n)[:, None]
        return geom.vertices[seg] + t * (geom.vertices[seg + 1] - geom.vertices[seg])
    raise GeometryError(f"unsupported geometry type {type(geom).__name__}")


# ---------------------------------------------------------------------------
# distance
# ---------------------------------------------------------------------------

def great_circle_km(lon1, lat1, lon2, lat2):
    """Spherical law of cosines distance in km; accepts scalars or arrays."""
    phi1 = np.radians(lat1)
    phi2 = np.radians(lat2)
    dlam = np.radians(np.asarray(lon2, dtype=float) - np.asarray(lon1, dtype=float))
    cosang = np.sin(phi1) * np.sin(phi2) + np.cos(phi1) * np.cos(phi2) * np.cos(dlam)
    return EARTH_RADIUS_KM * np.arccos(np.clip(cosang, -1.0, 1.0))


def great_circle_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance between two points in kilometres."""
    return float(great_circle_km(a.longitude, a.latitude, b.longitude, b.latitude))
