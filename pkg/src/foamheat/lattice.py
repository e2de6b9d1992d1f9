"""Deterministic synthetic foam generators.

Two graph families: a cubic strut lattice (the test oracle, fills its box
exactly) and a Kelvin foam of body-centered truncated octahedra clipped to
the box.  Kelvin vertex coordinates are kept on an integer grid in units of
pitch/8 so deduplication and facet alignment are exact; conversion to mm
happens once at emission.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import permutations, product

import numpy as np

from .foamgraph import FluidCell, FoamGraph, FoamGraphError, GraphNode, Strut, Window
from .geometry import (
    FACETS,
    SNAP_TOL,
    Box,
    PointIndex,
    clip_polygon_box,
    clip_polyhedron_box,
    panels_volume_centroid,
    polygon_normal,
)


class LatticeError(ValueError):
    """Invalid lattice specification."""


@dataclass
class LatticeSpec:
    kind: str
    extents: tuple[float, float, float]
    pitch: float
    strut_radius: float
    boundary_conditions: dict[str, str] = field(
        default_factory=lambda: {f: "NBC" for f in FACETS}
    )
    # Kelvin only: lattice shift in mm, multiples of pitch/32.  None picks
    # a generic cut on flux axes and vertex alignment on Dirichlet axes.
    offset: tuple[float, float, float] | None = None

    def validate(self) -> None:
        if self.kind not in ("cubic", "kelvin"):
            raise LatticeError(f"unknown lattice kind {self.kind!r}")
        if any(e <= 0 for e in self.extents):
            raise LatticeError("extents must be positive")
        if self.pitch <= 0:
            raise LatticeError("pitch must be positive")
        if self.strut_radius < 0:
            raise LatticeError("strut radius must be non-negative")
        for f in FACETS:
            if self.boundary_conditions.get(f) not in ("DBC", "NBC"):
                raise LatticeError(f"facet {f} needs a DBC or NBC tag")
        if self.kind == "cubic":
            for e in self.extents:
                ratio = e / self.pitch
                if abs(ratio - round(ratio)) > 1e-9:
                    raise LatticeError("pitch must divide the extents for cubic lattices")
        if self.kind == "kelvin" and self.pitch > min(self.extents):
            raise LatticeError("pitch larger than the box")
        if self.offset is not None:
            if self.kind != "kelvin":
                raise LatticeError("offset is only supported for Kelvin lattices")
            if any(not np.isfinite(o) for o in self.offset):
                raise LatticeError("offset must be finite")

    @classmethod
    def from_dict(cls, doc: dict) -> "LatticeSpec":
        try:
            spec = cls(
                kind=str(doc["kind"]),
                extents=tuple(float(x) for x in doc["extents"]),
                pitch=float(doc["pitch"]),
                strut_radius=float(doc["strut_radius"]),
                boundary_conditions={
                    f: str(doc.get("boundary_conditions", {}).get(f, "NBC")) for f in FACETS
                },
                offset=(
                    tuple(float(x) for x in doc["offset"]) if "offset" in doc else None
                ),
            )
        except (KeyError, TypeError, IndexError) as exc:
            raise LatticeError(f"malformed lattice spec: {exc}") from exc
        spec.validate()
        return spec

    @classmethod
    def load(cls, path) -> "LatticeSpec":
        with open(path) as fh:
            doc = json.load(fh)
        return cls.from_dict(doc)


def generate(spec: LatticeSpec) -> FoamGraph:
    spec.validate()
    if spec.kind == "cubic":
        return generate_cubic(spec)
    return generate_kelvin(spec)


# ---------------------------------------------------------------------------
# cubic lattice

def generate_cubic(spec: LatticeSpec) -> FoamGraph:
    """Grid nodes, axis struts, square windows, unit-cube fluid cells."""
    spec.validate()
    if spec.kind != "cubic":
        raise LatticeError("spec is not cubic")
    p = spec.pitch
    n = [int(round(e / p)) for e in spec.extents]
    nx, ny, nz = n

    def nid(i, j, k) -> int:
        return (i * (ny + 1) + j) * (nz + 1) + k

    nodes = []
    for i in range(nx + 1):
        for j in range(ny + 1):
            for k in range(nz + 1):
                nodes.append(GraphNode(f"n{nid(i, j, k)}", np.array([i * p, j * p, k * p])))

    struts = []
    strut_id: dict[tuple[int, int], str] = {}

    def add_strut(a, b):
        sid = f"s{len(struts)}"
        struts.append(Strut(sid, (f"n{a}", f"n{b}"), spec.strut_radius))
        strut_id[(a, b)] = sid
        return sid

    def sid_of(a, b) -> str:
        return strut_id[(a, b)] if (a, b) in strut_id else strut_id[(b, a)]

    for i in range(nx + 1):
        for j in range(ny + 1):
            for k in range(nz + 1):
                if i < nx:
                    add_strut(nid(i, j, k), nid(i + 1, j, k))
                if j < ny:
                    add_strut(nid(i, j, k), nid(i, j + 1, k))
                if k < nz:
                    add_strut(nid(i, j, k), nid(i, j, k + 1))

    windows = []
    window_key: dict[tuple, str] = {}

    def add_window(corners):
        loop = [sid_of(corners[m], corners[(m + 1) % 4]) for m in range(4)]
        wid = f"w{len(windows)}"
        windows.append(Window(wid, loop))
        window_key[tuple(sorted(corners))] = wid

    # xy-, xz-, yz-plane squares, in that order.
    for i in range(nx):
        for j in range(ny):
            for k in range(nz + 1):
                add_window([nid(i, j, k), nid(i + 1, j, k), nid(i + 1, j + 1, k), nid(i, j + 1, k)])
    for i in range(nx):
        for j in range(ny + 1):
            for k in range(nz):
                add_window([nid(i, j, k), nid(i + 1, j, k), nid(i + 1, j, k + 1), nid(i, j, k + 1)])
    for i in range(nx + 1):
        for j in range(ny):
            for k in range(nz):
                add_window([nid(i, j, k), nid(i, j + 1, k), nid(i, j + 1, k + 1), nid(i, j, k + 1)])

    cells = []
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                quads = [
                    [nid(i, j, k), nid(i + 1, j, k), nid(i + 1, j + 1, k), nid(i, j + 1, k)],
                    [nid(i, j, k + 1), nid(i + 1, j, k + 1), nid(i + 1, j + 1, k + 1), nid(i, j + 1, k + 1)],
                    [nid(i, j, k), nid(i + 1, j, k), nid(i + 1, j, k + 1), nid(i, j, k + 1)],
                    [nid(i, j + 1, k), nid(i + 1, j + 1, k), nid(i + 1, j + 1, k + 1), nid(i, j + 1, k + 1)],
                    [nid(i, j, k), nid(i, j + 1, k), nid(i, j + 1, k + 1), nid(i, j, k + 1)],
                    [nid(i + 1, j, k), nid(i + 1, j + 1, k), nid(i + 1, j + 1, k + 1), nid(i + 1, j, k + 1)],
                ]
                wids = [window_key[tuple(sorted(q))] for q in quads]
                cells.append(FluidCell(f"c{len(cells)}", wids))

    graph = FoamGraph(
        nodes,
        struts,
        windows,
        cells,
        Box((0.0, 0.0, 0.0), spec.extents),
        dict(spec.boundary_conditions),
    )
    graph.validate()
    return graph


# ---------------------------------------------------------------------------
# Kelvin (truncated octahedron) foam

def kelvin_cell_template():
    """Vertices and faces of one truncated octahedron.

    Vertex coordinates are integer triples in units of pitch/4 (all
    permutations of (0, +-1, +-2)); faces are vertex loops, 6 squares
    followed by 8 hexagons.
    """
    verts = sorted(
        {
            p
            for signs in product((1, -1), repeat=2
            )
            for base in permutations((0, 1 * signs[0], 2 * signs[1]))
            for p in (base,)
        }
    )
    vid = {v: i for i, v in enumerate(verts)}

    faces = []
    # Squares: one per axis direction.
    for axis in range(3):
        for s in (2, -2):
            ring = [v for v in verts if v[axis] == s]
            other = [a for a in range(3) if a != axis]
            ring.sort(key=lambda v: np.arctan2(v[other[1]], v[other[0]]))
            faces.append([vid[v] for v in ring])
    # Hexagons: one per octant.
    for sx, sy, sz in product((1, -1), repeat=3):
        ring = [
            v
            for v in verts
            if 0 not in (sx, sy, sz)
            and sorted(abs(c) for c in v) == [0, 1, 2]
            and v[0] * sx >= 0
            and v[1] * sy >= 0
            and v[2] * sz >= 0
        ]
        center = np.array([sx, sy, sz], dtype=float)
        axis_u = np.array([1.0, 0.0, 0.0]) - center[0] * center / 3.0
        axis_u /= np.linalg.norm(axis_u)
        axis_v = np.cross(center / np.linalg.norm(center), axis_u)
        ring.sort(
            key=lambda v: np.arctan2(np.dot(v, axis_v), np.dot(v, axis_u))
        )
        faces.append([vid[v] for v in ring])
    return verts, faces


_KELVIN_VERTS, _KELVIN_FACES = kelvin_cell_template()


def _kelvin_offset_mm(spec: LatticeSpec):
    """Lattice translation in mm.

    The default eighth-pitch shift gives a generic cut on every facet: no
    vertices on facet planes, no struts inside them.  Axes carrying a DBC
    facet are truncated afterwards, turning strut crossings into solid
    nodes on the plane, so any offset is admissible there too.
    """
    if spec.offset is not None:
        return np.array(spec.offset, dtype=float)
    return np.full(3, spec.pitch / 8.0)


def generate_kelvin(spec: LatticeSpec) -> FoamGraph:
    """Body-centered truncated octahedra clipped to the box."""
    spec.validate()
    if spec.kind != "kelvin":
        raise LatticeError("spec is not kelvin")
    a = spec.pitch
    unit = a / 32.0
    box = Box((0.0, 0.0, 0.0), spec.extents)
    off = _kelvin_offset_mm(spec)

    def to_mm(coord_u):
        return np.array([coord_u[0] * unit + off[0],
                         coord_u[1] * unit + off[1],
                         coord_u[2] * unit + off[2]])

    # Candidate cell centers (integer, units of pitch/32): corner and
    # body-centered sublattices; keep candidates whose +-pitch/2 bounding
    # box meets the domain box.
    centers = []
    ranges = []
    for axis in range(3):
        lo_u = (0.0 - off[axis]) / unit
        hi_u = (spec.extents[axis] - off[axis]) / unit
        i_min = int(np.floor((lo_u - 16.0) / 32.0)) - 1
        i_max = int(np.ceil((hi_u + 16.0) / 32.0)) + 1
        ranges.append(range(i_min, i_max + 1))
    for i, j, k in product(*ranges):
        for shift in ((0, 0, 0), (16, 16, 16)):
            c = (32 * i + shift[0], 32 * j + shift[1], 32 * k + shift[2])
            lo = [(c[ax] - 16) * unit + off[ax] for ax in range(3)]
            hi = [(c[ax] + 16) * unit + off[ax] for ax in range(3)]
            if all(hi[ax] > -1e-9 and lo[ax] < spec.extents[ax] + 1e-9 for ax in range(3)):
                centers.append(c)
    centers.sort()

    min_kept_volume = 1e-7 * a**3
    kept_centers = []
    for c in centers:
        panels = []
        for loop in _KELVIN_FACES:
            pts = [to_mm((c[0] + 8 * _KELVIN_VERTS[v][0],
                          c[1] + 8 * _KELVIN_VERTS[v][1],
                          c[2] + 8 * _KELVIN_VERTS[v][2])) for v in loop]
            panels.append((None, pts))
        # Orient panels outward before the volume test.
        cc = to_mm(c)
        oriented = []
        for tag, pts in panels:
            n = _newell(pts)
            ctr = np.mean(pts, axis=0)
            if np.dot(n, ctr - cc) < 0:
                pts = pts[::-1]
            oriented.append((tag, pts))
        clipped = clip_polyhedron_box(oriented, box)
        if not clipped:
            continue
        vol, _ = panels_volume_centroid(clipped, ref=np.clip(cc, box.lo, box.hi))
        if vol > min_kept_volume:
            kept_centers.append(c)

    if not kept_centers:
        raise LatticeError("no Kelvin cells intersect the box")

    # Collect windows and vertices of kept cells on the integer grid.
    vert_key_to_pos: dict[tuple, tuple] = {}
    window_keys: dict[frozenset, list[tuple]] = {}
    cell_windows: list[list[frozenset]] = []
    for c in kept_centers:
        wlist = []
        for loop in _KELVIN_FACES:
            keys = [
                (c[0] + 8 * _KELVIN_VERTS[v][0],
                 c[1] + 8 * _KELVIN_VERTS[v][1],
                 c[2] + 8 * _KELVIN_VERTS[v][2])
                for v in loop
            ]
            for kk in keys:
                vert_key_to_pos[kk] = kk
            fkey = frozenset(keys)
            if fkey not in window_keys:
                window_keys[fkey] = keys
            wlist.append(fkey)
        cell_windows.append(wlist)

    # Deterministic numbering: nodes by coordinate, windows by sorted keys.
    node_order = sorted(vert_key_to_pos)
    node_id = {kk: f"n{i}" for i, kk in enumerate(node_order)}
    nodes = [GraphNode(node_id[kk], to_mm(kk)) for kk in node_order]

    strut_pairs = set()
    window_order = sorted(window_keys, key=lambda f: tuple(sorted(f)))
    for fkey in window_order:
        keys = window_keys[fkey]
        m = len(keys)
        for i in range(m):
            pair = tuple(sorted((keys[i], keys[(i + 1) % m])))
            strut_pairs.add(pair)
    strut_order = sorted(strut_pairs)
    strut_id = {pair: f"s{i}" for i, pair in enumerate(strut_order)}
    struts = [
        Strut(strut_id[pair], (node_id[pair[0]], node_id[pair[1]]), spec.strut_radius)
        for pair in strut_order
    ]

    windows = []
    window_id = {}
    for w_index, fkey in enumerate(window_order):
        keys = window_keys[fkey]
        m = len(keys)
        loop = [
            strut_id[tuple(sorted((keys[i], keys[(i + 1) % m])))] for i in range(m)
        ]
        wid = f"w{w_index}"
        window_id[fkey] = wid
        windows.append(Window(wid, loop))

    cells = [
        FluidCell(f"c{ci}", [window_id[f] for f in wlist])
        for ci, wlist in enumerate(cell_windows)
    ]

    graph = FoamGraph(nodes, struts, windows, cells, box, dict(spec.boundary_conditions))
    graph.validate()

    # Machine the lattice flush at Dirichlet facets: crossings there become
    # solid nodes on the plane instead of flux ports.
    for ax, (neg, pos) in enumerate((("x-", "x+"), ("y-", "y+"), ("z-", "z+"))):
        lo_cut = 0.0 if spec.boundary_conditions[neg] == "DBC" else None
        hi_cut = spec.extents[ax] if spec.boundary_conditions[pos] == "DBC" else None
        if lo_cut is not None or hi_cut is not None:
            graph = truncate_graph(graph, ax, lo_cut, hi_cut)
    return graph


def _newell(pts):
    n = np.zeros(3)
    m = len(pts)
    for i in range(m):
        n += np.cross(pts[i], pts[(i + 1) % m])
    return 0.5 * n


# ---------------------------------------------------------------------------
# graph truncation at axis planes

_BIG = 1e15


def truncate_graph(graph: FoamGraph, axis: int, lo: float | None = None,
                   hi: float | None = None, tol: float = SNAP_TOL) -> FoamGraph:
    """Cut the solid graph flush at one or two planes normal to `axis`.

    Struts crossing a plane are shortened to end at a new solid node on the
    plane, clipped windows gain zero-radius rim struts along the cut, and
    cut fluid cells are closed with cap windows, so the output is again a
    valid foam graph with closed cell surfaces.  This machines a lattice
    flush at its Dirichlet facets; flux facets stay untouched so that
    crossings there still become boundary ports downstream.
    """
    box_lo = [-_BIG, -_BIG, -_BIG]
    box_hi = [_BIG, _BIG, _BIG]
    box_lo[axis] = lo if lo is not None else -_BIG
    box_hi[axis] = hi if hi is not None else _BIG
    slab = Box(tuple(box_lo), tuple(box_hi))

    def snap_axis(p):
        q = np.array(p, dtype=float)
        for bound in (lo, hi):
            if bound is not None and abs(q[axis] - bound) <= tol:
                q[axis] = bound
        return q

    pos = {n.id: snap_axis(n.position) for n in graph.nodes}
    inside = {nid: slab.contains(p, tol) for nid, p in pos.items()}

    plane_points = PointIndex(tol)
    for nid, p in pos.items():
        if inside[nid] and slab.on_boundary(p, tol):
            plane_points.add(p, nid)

    new_nodes: list[GraphNode] = []
    cut_counter = 0

    def plane_node(p) -> str:
        nonlocal cut_counter
        found = plane_points.find(p)
        if found is not None:
            return found
        nid = f"t{axis}n{cut_counter}"
        cut_counter += 1
        plane_points.add(p, nid)
        new_nodes.append(GraphNode(nid, np.array(p)))
        pos[nid] = np.array(p)
        return nid

    # strut id -> ("keep", a, b) | ("cut", inner_id, cut_id) | ("drop",)
    strut_state: dict[str, tuple] = {}
    new_struts: list[Strut] = []
    for s in graph.struts:
        na, nb = s.nodes
        pa, pb = pos[na], pos[nb]
        a_in, b_in = inside[na], inside[nb]
        if a_in and b_in:
            strut_state[s.id] = ("keep", na, nb)
            new_struts.append(Strut(s.id, (na, nb), s.radius))
            continue
        if not a_in and not b_in:
            mid = 0.5 * (pa + pb)
            if lo is not None and hi is not None and slab.strictly_inside(mid, tol):
                raise LatticeError(f"strut {s.id} spans the whole slab")
            strut_state[s.id] = ("drop",)
            continue
        nin, pin, pout = (na, pa, pb) if a_in else (nb, pb, pa)
        bound = lo if pout[axis] < pin[axis] else hi
        t = (bound - pin[axis]) / (pout[axis] - pin[axis])
        cut = pin + t * (pout - pin)
        cut[axis] = bound
        if np.linalg.norm(cut - pin) <= tol:
            strut_state[s.id] = ("drop",)
            continue
        cid = plane_node(cut)
        strut_state[s.id] = ("cut", nin, cid)
        new_struts.append(Strut(s.id, (nin, cid), s.radius))

    # Rim struts along the cut planes (zero radius).
    rim_ids: dict[tuple[str, str], str] = {}
    rim_counter = 0

    def rim_strut(a: str, b: str) -> str:
        nonlocal rim_counter
        key = (a, b) if a <= b else (b, a)
        if key not in rim_ids:
            sid = f"r{axis}s{rim_counter}"
            rim_counter += 1
            rim_ids[key] = sid
            new_struts.append(Strut(sid, key, 0.0))
        return rim_ids[key]

    struts_by_id = {s.id: s for s in graph.struts}
    # window id -> list of (sid, tail, head); dropped windows absent.
    window_sides: dict[str, list[tuple[str, str, str]]] = {}
    window_polys: dict[str, np.ndarray] = {}
    cut_windows: set[str] = set()
    new_windows: list[Window] = []
    for w in graph.windows:
        loop = graph.window_node_loop(w, struts_by_id)
        pts = [pos[nid] for nid in loop]
        tags = [("strut", sid, loop[i]) for i, sid in enumerate(w.struts)]
        clipped = clip_polygon_box(pts, tags, slab, tol)
        if clipped is None:
            cut_windows.add(w.id)
            continue
        cpts, ctags = clipped
        if any(t[0] == "cut" for t in ctags):
            cut_windows.add(w.id)

        sides: list[tuple[str, str, str]] = []
        m = len(ctags)
        start = next((i for i, t in enumerate(ctags) if t[0] == "strut"), None)
        if start is None:
            raise LatticeError(f"window {w.id} lies outside the slab rim")
        order = [(start + i) % m for i in range(m)]
        run: list[np.ndarray] = []

        def resolve_side(tag):
            sid, tail = tag[1], tag[2]
            state = strut_state[sid]
            if state[0] == "drop":
                raise LatticeError(f"window {w.id}: dropped strut {sid} survives")
            if state[0] == "keep":
                a, b = state[1], state[2]
                return (sid, a, b) if a == tail else (sid, b, a)
            _, nin, cid = state
            return (sid, nin, cid) if nin == tail else (sid, cid, nin)

        def flush(end_point, head_node):
            if not run:
                return
            run.append(end_point)
            pieces = [[run[0]]]
            for q in run[1:]:
                pieces[-1].append(q)
                if plane_points.find(q) is not None and not np.array_equal(q, run[-1]):
                    pieces.append([q])
            tail_node = sides[-1][2] if sides else None
            chain = []
            node_chain = [tail_node]
            for piece in pieces:
                end_id = plane_points.find(piece[-1])
                node_chain.append(end_id)
            node_chain[-1] = head_node
            for i in range(len(pieces)):
                a, b = node_chain[i], node_chain[i + 1]
                if a is None or b is None or a == b:
                    raise LatticeError(f"window {w.id}: open rim run")
                sides.append((rim_strut(a, b), a, b))
            run.clear()

        for i in order:
            tag = ctags[i]
            if tag[0] == "strut":
                side = resolve_side(tag)
                flush(cpts[i], side[1])
                sides.append(side)
            else:
                run.append(cpts[i])
        flush(cpts[order[0]], sides[0][1] if sides else None)
        window_sides[w.id] = sides
        window_polys[w.id] = np.array([np.asarray(q) for q in cpts])
        new_windows.append(Window(w.id, [sid for sid, _, _ in sides]))

    # Close cut cells with cap windows.
    new_cells: list[FluidCell] = []
    cap_windows: list[Window] = []
    for cell in graph.cells:
        wids = [wid for wid in cell.windows if wid in window_sides]
        if not wids:
            continue
        if not any(wid in cut_windows for wid in cell.windows):
            new_cells.append(FluidCell(cell.id, list(cell.windows)))
            continue
        interior = np.mean(
            [q for wid in wids for q in window_polys[wid]], axis=0
        )
        balance: dict[str, int] = {}
        side_dirs: dict[str, tuple[str, str]] = {}
        for wid in wids:
            poly = window_polys[wid]
            normal = polygon_normal(poly)
            sign = 1 if np.dot(normal, poly.mean(axis=0) - interior) > 0 else -1
            for sid, a, b in window_sides[wid]:
                side_dirs[sid] = (a, b) if sid not in side_dirs else side_dirs[sid]
                stored_a, _ = side_dirs[sid]
                d = 1 if a == stored_a else -1
                balance[sid] = balance.get(sid, 0) + sign * d
        balance = {sid: v for sid, v in balance.items() if v != 0}
        loops = _chain_balance(balance, side_dirs, cell.id)
        cap_ids = []
        for li, loop in enumerate(loops):
            wid = f"cap{axis}w_{cell.id}_{li}"
            cap_windows.append(Window(wid, [sid for sid, _, _ in loop]))
            cap_ids.append(wid)
        new_cells.append(FluidCell(cell.id, wids + cap_ids))

    all_windows = new_windows + cap_windows

    # Prune unreferenced struts and nodes, preserving order.
    used_windows = {wid for c in new_cells for wid in c.windows}
    all_windows = [w for w in all_windows if w.id in used_windows or not new_cells]
    used_struts = {sid for w in all_windows for sid in w.struts}
    kept_struts = [s for s in new_struts if s.id in used_struts or not all_windows]
    used_nodes = {nid for s in kept_struts for nid in s.nodes}
    all_nodes = [
        GraphNode(n.id, pos[n.id], n.ball_radius)
        for n in graph.nodes
        if n.id in used_nodes
    ] + [n for n in new_nodes if n.id in used_nodes]

    out = FoamGraph(
        all_nodes, kept_struts, all_windows, new_cells,
        graph.domain, dict(graph.boundary_conditions),
    )
    out.validate()
    return out


def _chain_balance(balance, side_dirs, label):
    """Chain unmatched directed sides into closed loops of (sid, tail, head)."""
    unused = dict(balance)
    loops = []
    while unused:
        sid0 = min(unused)
        v = unused.pop(sid0)
        a, b = side_dirs[sid0]
        if v > 0:
            a, b = b, a
        loop = [(sid0, a, b)]
        start, head = a, b
        while head != start:
            nxt = None
            for sid, v in sorted(unused.items()):
                ta, tb = side_dirs[sid]
                if v > 0:
                    ta, tb = tb, ta
                if ta == head:
                    nxt = (sid, ta, tb)
                    break
            if nxt is None:
                raise LatticeError(f"cell {label}: cannot close the cut boundary")
            unused.pop(nxt[0])
            loop.append(nxt)
            head = nxt[2]
        loops.append(loop)
    return loops
