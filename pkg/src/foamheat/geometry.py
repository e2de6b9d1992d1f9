"""Geometric primitives: axis-aligned domain boxes, polygon/polyhedron
measures and convex clipping.

All lengths are in mm. Clipping keeps provenance tags on polygon sides so
that the topology layer can tell original strut sides from cuts introduced
by the domain boundary.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Positions within this distance of a facet plane are treated as lying on it.
SNAP_TOL = 1e-9

FACETS = ("x-", "x+", "y-", "y+", "z-", "z+")

_FACET_AXIS = {"x-": 0, "x+": 0, "y-": 1, "y+": 1, "z-": 2, "z+": 2}
_FACET_SIGN = {"x-": -1.0, "x+": 1.0, "y-": -1.0, "y+": 1.0, "z-": -1.0, "z+": 1.0}


@dataclass(frozen=True)
class Box:
    """Axis-aligned domain box [lo, hi] in mm."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box corners must be finite")
        if np.any(hi <= lo):
            raise ValueError("box must have positive extent on every axis")

    @property
    def volume(self) -> float:
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return float(np.prod(hi - lo))

    def facet_offset(self, facet: str) -> float:
        """Plane offset: points p with outward_coord(p) == offset lie on the facet."""
        axis = _FACET_AXIS[facet]
        return self.lo[axis] if facet.endswith("-") else self.hi[axis]

    def outward_distance(self, p, facet: str) -> float:
        """Signed distance beyond the facet plane (positive = outside)."""
        axis = _FACET_AXIS[facet]
        if facet.endswith("-"):
            return self.lo[axis] - p[axis]
        return p[axis] - self.hi[axis]

    def contains(self, p, tol: float = SNAP_TOL) -> bool:
        return all(self.outward_distance(p, f) <= tol for f in FACETS)

    def strictly_inside(self, p, tol: float = SNAP_TOL) -> bool:
        return all(self.outward_distance(p, f) < -tol for f in FACETS)

    def on_facet(self, p, facet: str, tol: float = SNAP_TOL) -> bool:
        return abs(self.outward_distance(p, facet)) <= tol and self.contains(p, tol)

    def facets_of(self, p, tol: float = SNAP_TOL) -> tuple[str, ...]:
        """Facets whose plane contains p (p assumed within the box)."""
        return tuple(f for f in FACETS if abs(self.outward_distance(p, f)) <= tol)

    def on_boundary(self, p, tol: float = SNAP_TOL) -> bool:
        return self.contains(p, tol) and not self.strictly_inside(p, tol)

    def snap(self, p, tol: float = SNAP_TOL) -> np.ndarray:
        """Pull coordinates within tol of a facet plane exactly onto it."""
        q = np.array(p, dtype=float)
        for axis in range(3):
            if abs(q[axis] - self.lo[axis]) <= tol:
                q[axis] = self.lo[axis]
            elif abs(q[axis] - self.hi[axis]) <= tol:
                q[axis] = self.hi[axis]
        return q


# ---------------------------------------------------------------------------
# polygon measures

def polygon_normal(points: np.ndarray) -> np.ndarray:
    """Area-weighted normal (Newell); magnitude equals the polygon area."""
    pts = np.asarray(points, dtype=float)
    n = np.zeros(3)
    m = len(pts)
    for i in range(m):
        a = pts[i]
        b = pts[(i + 1) % m]
        n += np.cross(a, b)
    return 0.5 * n


def polygon_area(points: np.ndarray) -> float:
    return float(np.linalg.norm(polygon_normal(points)))


def polygon_centroid(points: np.ndarray) -> np.ndarray:
    """Area centroid of a planar polygon (vertex mean for degenerate ones)."""
    pts = np.asarray(points, dtype=float)
    ref = pts.mean(axis=0)
    acc = np.zeros(3)
    total = 0.0
    m = len(pts)
    for i in range(m):
        a = pts[i] - ref
        b = pts[(i + 1) % m] - ref
        w = np.linalg.norm(np.cross(a, b))
        acc += w * (a + b) / 3.0
        total += w
    if total <= 0.0:
        return ref
    return ref + acc / total


def triangle_area(a, b, c) -> float:
    return 0.5 * float(np.linalg.norm(np.cross(np.asarray(b) - a, np.asarray(c) - a)))


def tet_volume_signed(p0, p1, p2, p3) -> float:
    """Signed volume of the tetrahedron (p0, p1, p2, p3)."""
    m = np.column_stack((np.asarray(p1) - p0, np.asarray(p2) - p0, np.asarray(p3) - p0))
    return float(np.linalg.det(m)) / 6.0


def polyline_length(points: np.ndarray) -> float:
    pts = np.asarray(points, dtype=float)
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


def polyline_midpoint(points: np.ndarray) -> np.ndarray:
    """Point at half arclength along the polyline."""
    pts = np.asarray(points, dtype=float)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    total = float(seg.sum())
    if total == 0.0:
        return pts[0].copy()
    target = 0.5 * total
    acc = 0.0
    for i, s in enumerate(seg):
        if acc + s >= target:
            t = (target - acc) / s
            return pts[i] + t * (pts[i + 1] - pts[i])
        acc += s
    return pts[-1].copy()


class PointIndex:
    """Tolerance-aware lookup from 3D positions to integer payloads.

    Points within `tol` of a stored point resolve to it; the grid probe
    checks neighbouring cells so matches never fall through cell seams.
    """

    def __init__(self, tol: float = SNAP_TOL):
        self.tol = tol
        self.quantum = 4.0 * tol
        self._cells: dict[tuple[int, int, int], list[tuple[np.ndarray, int]]] = {}

    def _cell_of(self, p) -> tuple[int, int, int]:
        return tuple(int(np.floor(c / self.quantum)) for c in p)

    def add(self, p, payload: int) -> None:
        p = np.asarray(p, dtype=float)
        self._cells.setdefault(self._cell_of(p), []).append((p, payload))

    def find(self, p) -> int | None:
        p = np.asarray(p, dtype=float)
        base = self._cell_of(p)
        best = None
        best_d = self.tol
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    cell = (base[0] + dx, base[1] + dy, base[2] + dz)
                    for q, payload in self._cells.get(cell, ()):
                        d = float(np.linalg.norm(q - p))
                        if d <= best_d:
                            best_d = d
                            best = payload
        return best


# ---------------------------------------------------------------------------
# tagged convex clipping
#
# A tagged polygon is (points, tags) where tags[i] labels the side from
# points[i] to points[i+1].  Clipping by a facet half-space keeps original
# tags on surviving sides and labels every newly created side ("cut", facet).

def clip_polygon_facet(points, tags, box: Box, facet: str, tol: float = SNAP_TOL):
    """Clip a tagged polygon to the inside half-space of one facet.

    Returns (points, tags) or None when nothing of the polygon remains.
    Vertices within tol of the plane count as inside and are snapped onto it.
    """
    pts = [np.asarray(p, dtype=float) for p in points]
    m = len(pts)
    if m == 0:
        return None
    d = [box.outward_distance(p, facet) for p in pts]
    if all(di <= tol for di in d):
        if all(di < -tol for di in d):
            return [p.copy() for p in pts], list(tags)
        # Snap near-plane vertices; no topology change.
        out = []
        axis = _FACET_AXIS[facet]
        plane = box.facet_offset(facet)
        for p, di in zip(pts, d):
            q = p.copy()
            if abs(di) <= tol:
                q[axis] = plane
            out.append(q)
        return out, list(tags)
    if all(di >= -tol for di in d):
        return None

    axis = _FACET_AXIS[facet]
    plane = box.facet_offset(facet)
    out_pts: list[np.ndarray] = []
    out_tags: list = []

    def emit(p, tag):
        if out_pts and np.linalg.norm(p - out_pts[-1]) <= tol:
            # Collapse duplicate vertex; keep the side tag that continues.
            out_tags[-1] = tag
            return
        out_pts.append(p)
        out_tags.append(tag)

    for i in range(m):
        a, b = pts[i], pts[(i + 1) % m]
        da, db = d[i], d[(i + 1) % m]
        a_in = da <= tol
        b_in = db <= tol
        if a_in:
            q = a.copy()
            if abs(da) <= tol:
                q[axis] = plane
            if b_in:
                emit(q, tags[i])
            else:
                emit(q, tags[i])
                t = da / (da - db)
                x = a + t * (b - a)
                x[axis] = plane
                emit(x, ("cut", facet))
        else:
            if b_in:
                t = da / (da - db)
                x = a + t * (b - a)
                x[axis] = plane
                emit(x, tags[i])
            # else: side fully outside, nothing emitted
    # Remove a duplicate closing vertex.
    if len(out_pts) >= 2 and np.linalg.norm(out_pts[0] - out_pts[-1]) <= tol:
        out_pts.pop()
        out_tags.pop()
    if len(out_pts) < 3:
        return None
    return out_pts, out_tags


def clip_polygon_box(points, tags, box: Box, tol: float = SNAP_TOL):
    """Clip a tagged polygon to the box. Returns (points, tags) or None."""
    cur = ([np.asarray(p, dtype=float) for p in points], list(tags))
    for facet in FACETS:
        cur = clip_polygon_facet(cur[0], cur[1], box, facet, tol)
        if cur is None:
            return None
    if polygon_area(np.array(cur[0])) <= tol * tol:
        return None
    return cur


def segment_box_exit(a, b, box: Box, tol: float = SNAP_TOL):
    """Exit point of segment a->b through the box surface, a inside, b outside.

    Returns (point, facets) where facets are the planes the point lies on.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    t_exit = 1.0
    for facet in FACETS:
        da = box.outward_distance(a, facet)
        db = box.outward_distance(b, facet)
        if db > tol and da < db:
            t = (0.0 - da) / (db - da)
            t_exit = min(t_exit, max(t, 0.0))
    p = box.snap(a + t_exit * (b - a), tol)
    return p, box.facets_of(p, tol)


def segment_intersects_open_box(a, b, box: Box, tol: float = SNAP_TOL) -> bool:
    """True when segment a->b passes through the open interior of the box."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    t0, t1 = 0.0, 1.0
    for facet in FACETS:
        da = box.outward_distance(a, facet)
        db = box.outward_distance(b, facet)
        if abs(da - db) <= 1e-300:
            if da >= -tol:
                return False
            continue
        t = da / (da - db)
        if da > db:
            t0 = max(t0, t)
        else:
            t1 = min(t1, t)
    if t0 >= t1:
        return False
    mid = a + 0.5 * (t0 + t1) * (b - a)
    return box.strictly_inside(mid, tol)


# ---------------------------------------------------------------------------
# convex polyhedron clipping (geometry only, used for measures)

def _chain_segments(segments, tol):
    """Chain unordered segments into closed loops (list of vertex lists)."""
    segs = [(np.asarray(a), np.asarray(b)) for a, b in segments]
    loops = []
    used = [False] * len(segs)
    for start in range(len(segs)):
        if used[start]:
            continue
        used[start] = True
        loop = [segs[start][0], segs[start][1]]
        while True:
            tail = loop[-1]
            found = False
            for j, (a, b) in enumerate(segs):
                if used[j]:
                    continue
                if np.linalg.norm(a - tail) <= tol:
                    loop.append(b)
                    used[j] = True
                    found = True
                    break
                if np.linalg.norm(b - tail) <= tol:
                    loop.append(a)
                    used[j] = True
                    found = True
                    break
            if not found:
                break
            if np.linalg.norm(loop[-1] - loop[0]) <= tol:
                loop.pop()
                break
        if len(loop) >= 3:
            loops.append(loop)
    return loops


def clip_polyhedron_box(panels, box: Box, tol: float = SNAP_TOL):
    """Clip a convex polyhedron to the box.

    `panels` is a list of (tag, points) with outward-oriented polygons.
    Returns the clipped panel list; cap polygons created on a facet carry the
    tag ("cap", facet) and are oriented with the facet's outward normal.
    """
    cur = [(tag, [np.asarray(p, dtype=float) for p in pts]) for tag, pts in panels]
    for facet in FACETS:
        axis = _FACET_AXIS[facet]
        plane = box.facet_offset(facet)
        outward = np.zeros(3)
        outward[axis] = _FACET_SIGN[facet]
        nxt = []
        cut_segments = []
        tangent_segments = []
        for tag, pts in cur:
            tags = [None] * len(pts)
            res = clip_polygon_facet(pts, tags, box, facet, tol)
            if res is None:
                continue
            new_pts, new_tags = res
            coplanar = all(abs(box.outward_distance(p, facet)) <= tol for p in new_pts)
            for i, t in enumerate(new_tags):
                a = new_pts[i]
                b = new_pts[(i + 1) % len(new_pts)]
                if np.linalg.norm(b - a) <= tol:
                    continue
                if t == ("cut", facet):
                    cut_segments.append((a, b))
                elif (
                    not coplanar
                    and abs(box.outward_distance(a, facet)) <= tol
                    and abs(box.outward_distance(b, facet)) <= tol
                ):
                    # Side lying in the facet plane: part of the cap rim when
                    # the cell is cut tangentially along existing sides.
                    tangent_segments.append((a, b))
            if polygon_area(np.array(new_pts)) > tol * tol:
                nxt.append((tag, new_pts))
        if cut_segments:
            seen = set()
            rim = []
            for a, b in cut_segments + tangent_segments:
                ka = tuple(np.round(a / max(tol, 1e-12)).astype(np.int64))
                kb = tuple(np.round(b / max(tol, 1e-12)).astype(np.int64))
                key = (min(ka, kb), max(ka, kb))
                if key in seen:
                    continue
                seen.add(key)
                rim.append((a, b))
            for loop in _chain_segments(rim, max(tol * 10.0, 1e-12)):
                poly = np.array(loop)
                if polygon_area(poly) <= tol * tol:
                    continue
                n = polygon_normal(poly)
                if np.dot(n, outward) < 0.0:
                    loop = loop[::-1]
                nxt.append((("cap", facet), loop))
        cur = nxt
        if not cur:
            return []
    return cur


def panels_volume_centroid(panels, ref=None):
    """Volume and centroid of a closed outward-oriented panel surface."""
    if ref is None:
        allpts = np.vstack([np.asarray(pts) for _, pts in panels])
        ref = allpts.mean(axis=0)
    vol = 0.0
    cmoment = np.zeros(3)
    for _, pts in panels:
        pts = np.asarray(pts, dtype=float)
        cp = polygon_centroid(pts)
        m = len(pts)
        for i in range(m):
            a, b = pts[i], pts[(i + 1) % m]
            v = tet_volume_signed(ref, cp, a, b)
            vol += v
            cmoment += v * (ref + cp + a + b) / 4.0
    if abs(vol) < 1e-300:
        return 0.0, np.asarray(ref, dtype=float)
    return vol, cmoment / vol
