"""Primal 3-complex construction from a foam graph.

Solid nodes and struts become 0/1-cells, windows become faces and fluid
cells become volumes.  Struts leaving the box through a heat-flux facet are
clipped, spawning additional border nodes and border edges; cut fluid cells
are closed with additional border faces synthesized on the box surface so
the domain is tiled by volumes.  Every cell gets an inner / border /
additional-border label driving the later incidence splits.

Faces are stored as closed loops of real edges.  Where the box surface
bends around a domain edge or corner, the closing face and its rim edges
simply carry bent polylines; the kink points never enter the boundary
algebra, so the double-boundary identity stays exact in integer arithmetic.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .chains import ComplexSkeleton
from .foamgraph import FoamGraph
from .geometry import (
    FACETS,
    SNAP_TOL,
    Box,
    PointIndex,
    clip_polygon_box,
    clip_polyhedron_box,
    panels_volume_centroid,
    polygon_centroid,
    polygon_normal,
    segment_box_exit,
    segment_intersects_open_box,
)


class PrimalBuildError(ValueError):
    """Foam graph cannot be built into a classified complex."""


class NodeKind(Enum):
    INNER = "inner"
    BORDER = "border"
    ADDITIONAL_BORDER = "additional_border"


class EdgeKind(Enum):
    INNER = "inner"
    BORDER = "border"
    ADDITIONAL_BORDER = "additional_border"


class FaceKind(Enum):
    INNER = "inner"
    BORDER = "border"
    ADDITIONAL_BORDER = "additional_border"


class VolumeKind(Enum):
    INNER = "inner"
    BORDER = "border"


@dataclass
class PrimalComplex:
    skeleton: ComplexSkeleton
    domain: Box
    boundary_conditions: dict[str, str]
    node_positions: np.ndarray
    node_kinds: list[NodeKind]
    edge_kinds: list[EdgeKind]
    face_kinds: list[FaceKind]
    volume_kinds: list[VolumeKind]
    node_ids: list[str]                     # graph ids; synthesized for crossings
    edge_polylines: list[np.ndarray]        # geometry per edge, >= 2 points
    edge_radii: list[float | None]          # strut radius; None for closure edges
    edge_source: list[str | None]           # strut id; None for closure edges
    face_panels: list[list[np.ndarray]]     # planar polygons tiling each face
    face_source: list[str | None]           # window id; None for closure faces
    face_facets: list[tuple[str, ...]]      # box facets the face lies on
    volume_source: list[str]                # fluid cell ids
    volume_measures: np.ndarray             # clipped volume per 3-cell (mm^3)
    volume_centroids: np.ndarray            # barycenter per 3-cell (mm)

    @property
    def counts(self):
        return self.skeleton.counts

    def kind_counts(self) -> dict[str, dict[str, int]]:
        out: dict[str, dict[str, int]] = {}
        for name, kinds in (
            ("nodes", self.node_kinds),
            ("edges", self.edge_kinds),
            ("faces", self.face_kinds),
            ("volumes", self.volume_kinds),
        ):
            counter: dict[str, int] = {}
            for k in kinds:
                counter[k.value] = counter.get(k.value, 0) + 1
            out[name] = counter
        return out

    def inner_nodes(self) -> np.ndarray:
        return np.array([i for i, k in enumerate(self.node_kinds) if k is NodeKind.INNER], dtype=int)

    def border_nodes(self) -> np.ndarray:
        return np.array([i for i, k in enumerate(self.node_kinds) if k is NodeKind.BORDER], dtype=int)

    def inner_edges(self) -> np.ndarray:
        return np.array([i for i, k in enumerate(self.edge_kinds) if k is EdgeKind.INNER], dtype=int)

    def border_edges(self) -> np.ndarray:
        return np.array([i for i, k in enumerate(self.edge_kinds) if k is EdgeKind.BORDER], dtype=int)


@dataclass
class IncidenceBlocks:
    """Split co-incidence matrices and their index maps.

    Rows of d1_ii / d1_ib are inner edges, rows of d1_bi are border edges;
    columns are inner nodes (ii, bi) or Dirichlet border nodes (ib).
    Additional border cells carry no rows or columns.
    """

    d1_ii: sp.csr_matrix
    d1_ib: sp.csr_matrix
    d1_bi: sp.csr_matrix
    inner_nodes: np.ndarray
    border_nodes: np.ndarray
    inner_edges: np.ndarray
    border_edges: np.ndarray


def split_incidence(p: PrimalComplex) -> IncidenceBlocks:
    if p.node_kinds is None or p.edge_kinds is None:
        raise PrimalBuildError("complex is not classified")
    d1 = sp.csr_matrix(p.skeleton.boundary_1.transpose())
    inner_nodes = p.inner_nodes()
    border_nodes = p.border_nodes()
    inner_edges = p.inner_edges()
    border_edges = p.border_edges()

    def block(rows, cols):
        if len(rows) == 0 or len(cols) == 0:
            return sp.csr_matrix((len(rows), len(cols)), dtype=np.int64)
        return sp.csr_matrix(d1[rows, :][:, cols])

    return IncidenceBlocks(
        d1_ii=block(inner_edges, inner_nodes),
        d1_ib=block(inner_edges, border_nodes),
        d1_bi=block(border_edges, inner_nodes),
        inner_nodes=inner_nodes,
        border_nodes=border_nodes,
        inner_edges=inner_edges,
        border_edges=border_edges,
    )


# ---------------------------------------------------------------------------
# construction

def build_primal(graph: FoamGraph, bc: dict[str, str] | None = None,
                 tol: float = SNAP_TOL) -> PrimalComplex:
    """Build and classify the primal complex of a foam graph.

    `bc` overrides the per-facet tags stored on the graph.
    """
    graph.validate()
    bcs = dict(graph.boundary_conditions)
    if bc is not None:
        bcs.update(bc)
    for f in FACETS:
        if bcs.get(f) not in ("DBC", "NBC"):
            raise PrimalBuildError(f"facet {f} needs a DBC or NBC tag")

    b = _Builder(graph, graph.domain, bcs, tol)
    b.build_nodes_and_edges()
    b.build_faces()
    b.build_volumes()
    return b.finish()


class _Builder:
    def __init__(self, graph, box, bcs, tol):
        self.graph = graph
        self.box = box
        self.bcs = bcs
        self.tol = tol

        self.snapped = {n.id: box.snap(n.position, tol) for n in graph.nodes}
        self.strut_by_id = {s.id: s for s in graph.struts}
        self.window_loops = {
            w.id: graph.window_node_loop(w, self.strut_by_id) for w in graph.windows
        }

        self.node_pos: list[np.ndarray] = []
        self.node_ids: list[str] = []
        self.node_kinds: list[NodeKind] = []
        self.graph_node_index: dict[str, int] = {}

        self.edge_nodes: list[tuple[int, int]] = []
        self.edge_kinds: list[EdgeKind] = []
        self.edge_polylines: list[np.ndarray] = []
        self.edge_radii: list[float | None] = []
        self.edge_source: list[str | None] = []

        # strut id -> ("inside" | "crossing", edge index) or ("dropped", None)
        self.strut_state: dict[str, tuple[str, int | None]] = {}

        self.face_loops: list[list[tuple[int, int]]] = []
        self.face_kinds: list[FaceKind] = []
        self.face_panels: list[list[np.ndarray]] = []
        self.face_source: list[str | None] = []
        self.face_facets: list[tuple[str, ...]] = []
        self.window_face: dict[str, int] = {}

        self.volume_faces: list[list[tuple[int, int]]] = []
        self.volume_kinds: list[VolumeKind] = []
        self.volume_source: list[str] = []
        self.volume_measures: list[float] = []
        self.volume_centroids: list[np.ndarray] = []

        self.boundary_points = PointIndex(tol)

    # -- nodes and edges ----------------------------------------------------

    def _add_node(self, pos, kind, node_id) -> int:
        self.node_pos.append(np.asarray(pos, dtype=float))
        self.node_kinds.append(kind)
        self.node_ids.append(node_id)
        return len(self.node_pos) - 1

    def _add_edge(self, a, b, kind, polyline, radius, source) -> int:
        self.edge_nodes.append((a, b))
        self.edge_kinds.append(kind)
        self.edge_polylines.append(np.asarray(polyline, dtype=float))
        self.edge_radii.append(radius)
        self.edge_source.append(source)
        return len(self.edge_nodes) - 1

    def build_nodes_and_edges(self):
        box, tol = self.box, self.tol
        for n in self.graph.nodes:
            pos = self.snapped[n.id]
            if not box.contains(pos, tol):
                continue  # outside endpoint of a crossing strut
            on_dbc = any(
                box.on_facet(pos, f, tol) and self.bcs[f] == "DBC" for f in FACETS
            )
            kind = NodeKind.BORDER if on_dbc else NodeKind.INNER
            idx = self._add_node(pos, kind, n.id)
            self.graph_node_index[n.id] = idx
            if box.on_boundary(pos, tol):
                self.boundary_points.add(pos, idx)

        for s in self.graph.struts:
            na, nb = s.nodes
            pa, pb = self.snapped[na], self.snapped[nb]
            a_in = box.contains(pa, tol)
            b_in = box.contains(pb, tol)
            if a_in and b_in:
                ia = self.graph_node_index[na]
                ib = self.graph_node_index[nb]
                e = self._add_edge(ia, ib, EdgeKind.INNER, [pa, pb], s.radius, s.id)
                self.strut_state[s.id] = ("inside", e)
                continue
            if not a_in and not b_in:
                if segment_intersects_open_box(pa, pb, box, tol):
                    raise PrimalBuildError(
                        f"reentrant strut {s.id}: crosses the domain without an interior endpoint"
                    )
                self.strut_state[s.id] = ("dropped", None)
                continue
            inside_id, pin, pout = (na, pa, pb) if a_in else (nb, pb, pa)
            exit_point, on_facets = segment_box_exit(pin, pout, box, tol)
            if np.linalg.norm(exit_point - pin) <= tol:
                # Grazing strut: the part inside the box is a single point.
                self.strut_state[s.id] = ("dropped", None)
                continue
            crossing_facets = [
                f for f in on_facets if box.outward_distance(pout, f) > tol
            ]
            if not crossing_facets:
                raise PrimalBuildError(f"strut {s.id}: could not identify the exit facet")
            for f in crossing_facets:
                if self.bcs[f] == "DBC":
                    raise PrimalBuildError(
                        f"strut {s.id} crosses the DBC facet {f}; only flux facets may be crossed"
                    )
            ab = self.boundary_points.find(exit_point)
            if ab is None:
                ab = self._add_node(exit_point, NodeKind.ADDITIONAL_BORDER, f"x:{s.id}")
                self.boundary_points.add(exit_point, ab)
            kind = (
                EdgeKind.BORDER
                if self.node_kinds[ab] is NodeKind.ADDITIONAL_BORDER
                else EdgeKind.INNER
            )
            e = self._add_edge(
                self.graph_node_index[inside_id], ab, kind,
                [pin, self.node_pos[ab]], s.radius, s.id,
            )
            self.strut_state[s.id] = ("crossing", e)

    # -- faces ----------------------------------------------------------------

    def build_faces(self):
        for w in self.graph.windows:
            self._build_window_face(w)

    def _build_window_face(self, w):
        box, tol = self.box, self.tol
        node_loop = self.window_loops[w.id]
        positions = [self.snapped[nid] for nid in node_loop]
        tags = [("strut", sid, node_loop[i]) for i, sid in enumerate(w.struts)]

        clipped = clip_polygon_box(positions, tags, box, tol)
        if clipped is None:
            return  # window entirely outside
        pts, new_tags = clipped
        was_cut = any(t[0] == "cut" for t in new_tags)

        m = len(new_tags)
        start = next((i for i, t in enumerate(new_tags) if t[0] == "strut"), None)
        if start is None:
            raise PrimalBuildError(
                f"window {w.id}: boundary lies entirely outside the box"
            )
        order = [(start + i) % m for i in range(m)]

        loop: list[tuple[int, int]] = []
        run_pts: list[np.ndarray] = []

        def flush_run(end_point):
            if not run_pts:
                return
            run_pts.append(end_point)
            self._emit_chord_edges(w.id, list(run_pts), loop)
            run_pts.clear()

        for i in order:
            t = new_tags[i]
            if t[0] == "strut":
                flush_run(pts[i])
                loop.append(self._resolve_strut_side(w.id, t[1], t[2]))
            else:
                run_pts.append(pts[i])
        flush_run(pts[order[0]])

        self._check_loop_closed(w.id, loop)

        facets = tuple(
            f for f in FACETS
            if all(abs(box.outward_distance(p, f)) <= tol for p in pts)
        )
        kind = FaceKind.BORDER if (was_cut or facets) else FaceKind.INNER
        poly = np.array([np.asarray(p) for p in pts])
        self.face_loops.append(loop)
        self.face_kinds.append(kind)
        self.face_panels.append([poly])
        self.face_source.append(w.id)
        self.face_facets.append(facets)
        self.window_face[w.id] = len(self.face_loops) - 1

    def _resolve_strut_side(self, wid, strut_id, walk_tail):
        """Map a surviving strut side onto its edge with a walk-direction sign."""
        state, e = self.strut_state[strut_id]
        if state == "dropped" or e is None:
            raise PrimalBuildError(
                f"window {wid}: strut {strut_id} survives clipping but was dropped"
            )
        if state == "inside":
            strut = self.strut_by_id[strut_id]
            sign = 1 if strut.nodes[0] == walk_tail else -1
            return (e, sign)
        # Crossing strut: edge runs interior node -> boundary point.
        inside_node_id = self.node_ids[self.edge_nodes[e][0]]
        sign = 1 if inside_node_id == walk_tail else -1
        return (e, sign)

    def _emit_chord_edges(self, wid, run, loop):
        """Turn one cut run into additional border edges, split at nodes."""
        pieces: list[list[np.ndarray]] = []
        cur = [run[0]]
        for p in run[1:]:
            cur.append(p)
            if self.boundary_points.find(p) is not None:
                pieces.append(cur)
                cur = [p]
        if len(cur) >= 2:
            pieces.append(cur)
        for piece in pieces:
            a = self.boundary_points.find(piece[0])
            bnode = self.boundary_points.find(piece[-1])
            if a is None or bnode is None:
                raise PrimalBuildError(
                    f"window {wid}: cut run does not terminate at complex nodes"
                )
            if a == bnode:
                raise PrimalBuildError(f"window {wid}: degenerate closed cut run")
            cleaned = _dedupe_polyline(piece, self.tol)
            e = self._add_edge(a, bnode, EdgeKind.ADDITIONAL_BORDER, cleaned, None, None)
            loop.append((e, 1))

    def _check_loop_closed(self, label, loop):
        bal: dict[int, int] = {}
        for e, s in loop:
            a, b = self.edge_nodes[e]
            if s < 0:
                a, b = b, a
            bal[a] = bal.get(a, 0) - 1
            bal[b] = bal.get(b, 0) + 1
        if any(v != 0 for v in bal.values()):
            raise PrimalBuildError(f"face loop of {label} is not closed")

    # -- volumes --------------------------------------------------------------

    def build_volumes(self):
        graph, box, tol = self.graph, self.box, self.tol

        for cell in graph.cells:
            raw_panels = []
            ref = np.zeros(3)
            npts = 0
            for wid in cell.windows:
                pts = [self.snapped[nid] for nid in self.window_loops[wid]]
                raw_panels.append((wid, pts))
                ref += np.sum(pts, axis=0)
                npts += len(pts)
            ref /= max(npts, 1)
            oriented = []
            for wid, pts in raw_panels:
                n = polygon_normal(np.array(pts))
                c = np.mean(pts, axis=0)
                if np.dot(n, c - ref) < 0:
                    pts = pts[::-1]
                oriented.append((wid, pts))

            clipped_panels = clip_polyhedron_box(oriented, box, tol)
            if not clipped_panels:
                continue  # cell entirely outside the box
            vol, centroid = panels_volume_centroid(clipped_panels)
            if vol <= tol:
                continue

            faces: list[tuple[int, int]] = []
            balance: dict[int, int] = {}
            for wid in cell.windows:
                fidx = self.window_face.get(wid)
                if fidx is None:
                    continue  # window clipped away entirely
                normal = polygon_normal(self.face_panels[fidx][0])
                fcent = polygon_centroid(self.face_panels[fidx][0])
                sign = 1 if np.dot(normal, fcent - centroid) > 0 else -1
                faces.append((fidx, sign))
                for e, es in self.face_loops[fidx]:
                    balance[e] = balance.get(e, 0) + sign * es
            balance = {e: v for e, v in balance.items() if v != 0}

            cap_faces = self._close_volume(cell.id, balance, clipped_panels)
            faces.extend((f, 1) for f in cap_faces)

            self.volume_faces.append(faces)
            self.volume_source.append(cell.id)
            self.volume_measures.append(vol)
            self.volume_centroids.append(centroid)

        for faces in self.volume_faces:
            border = any(
                any(self.bcs[f] == "NBC" for f in self.face_facets[fi])
                for fi, _ in faces
            )
            self.volume_kinds.append(VolumeKind.BORDER if border else VolumeKind.INNER)

    def _close_volume(self, cell_id, balance, clipped_panels):
        """Build additional border faces whose boundary cancels `balance`."""
        if not balance:
            return []
        for e, v in balance.items():
            if v not in (-1, 1):
                raise PrimalBuildError(
                    f"cell {cell_id}: open boundary uses edge {e} with coefficient {v}"
                )
        unused = dict(balance)
        loops: list[list[tuple[int, int]]] = []
        while unused:
            e0 = min(unused)
            s0 = -unused.pop(e0)
            loop = [(e0, s0)]
            a, bnode = self.edge_nodes[e0]
            if s0 < 0:
                a, bnode = bnode, a
            start, head = a, bnode
            while head != start:
                nxt = None
                for e, v in sorted(unused.items()):
                    ta, tb = self.edge_nodes[e]
                    s = -v
                    if s < 0:
                        ta, tb = tb, ta
                    if ta == head:
                        nxt = (e, s, tb)
                        break
                if nxt is None:
                    raise PrimalBuildError(
                        f"cell {cell_id}: cannot close the clipped boundary into loops"
                    )
                e, s, head = nxt
                unused.pop(e)
                loop.append((e, s))
            loops.append(loop)

        cap_panels = [
            (tag, pts)
            for tag, pts in clipped_panels
            if isinstance(tag, tuple) and tag and tag[0] == "cap"
        ]
        if not cap_panels:
            raise PrimalBuildError(
                f"cell {cell_id}: open boundary but no cap geometry was produced"
            )

        if len(loops) == 1:
            groups = [cap_panels]
        else:
            groups: list[list] = [[] for _ in loops]
            loop_lookup = []
            for loop in loops:
                idx = PointIndex(max(self.tol * 10.0, 1e-8))
                for e, _ in loop:
                    for p in self.edge_polylines[e]:
                        idx.add(p, 1)
                loop_lookup.append(idx)
            for tag, pts in cap_panels:
                scores = [
                    sum(1 for p in pts if idx.find(p) is not None)
                    for idx in loop_lookup
                ]
                best = int(np.argmax(scores))
                if scores[best] == 0:
                    raise PrimalBuildError(
                        f"cell {cell_id}: cap panel cannot be matched to a closure loop"
                    )
                groups[best].append((tag, pts))

        face_indices = []
        for loop, group in zip(loops, groups):
            if not group:
                raise PrimalBuildError(f"cell {cell_id}: closure loop without cap geometry")
            facets = tuple(sorted({tag[1] for tag, _ in group}))
            self.face_loops.append(loop)
            self.face_kinds.append(FaceKind.ADDITIONAL_BORDER)
            self.face_panels.append(
                [np.array([np.asarray(q) for q in pts]) for _, pts in group]
            )
            self.face_source.append(None)
            self.face_facets.append(facets)
            face_indices.append(len(self.face_loops) - 1)
        return face_indices

    # -- assembly -------------------------------------------------------------

    def finish(self) -> PrimalComplex:
        skeleton = ComplexSkeleton.build(
            len(self.node_pos),
            self.edge_nodes,
            [tuple(loop) for loop in self.face_loops],
            [tuple(vf) for vf in self.volume_faces],
        )
        positions = np.array(self.node_pos) if self.node_pos else np.zeros((0, 3))
        return PrimalComplex(
            skeleton=skeleton,
            domain=self.box,
            boundary_conditions=dict(self.bcs),
            node_positions=positions,
            node_kinds=self.node_kinds,
            edge_kinds=self.edge_kinds,
            face_kinds=self.face_kinds,
            volume_kinds=self.volume_kinds,
            node_ids=self.node_ids,
            edge_polylines=self.edge_polylines,
            edge_radii=self.edge_radii,
            edge_source=self.edge_source,
            face_panels=self.face_panels,
            face_source=self.face_source,
            face_facets=self.face_facets,
            volume_source=self.volume_source,
            volume_measures=np.array(self.volume_measures),
            volume_centroids=(
                np.array(self.volume_centroids)
                if self.volume_centroids
                else np.zeros((0, 3))
            ),
        )


def _dedupe_polyline(points, tol):
    out = [np.asarray(points[0], dtype=float)]
    for p in points[1:]:
        if np.linalg.norm(np.asarray(p) - out[-1]) > tol:
            out.append(np.asarray(p, dtype=float))
    if len(out) < 2:
        out.append(np.asarray(points[-1], dtype=float))
    return np.array(out)
