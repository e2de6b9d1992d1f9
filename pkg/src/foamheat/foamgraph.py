"""Foam graph exchange format: solid nodes, struts, windows, fluid cells,
domain box and per-facet boundary-condition tags.

This is the ingestion boundary of the pipeline.  The JSON schema is:

    {
      "domain": {"min": [x, y, z], "max": [x, y, z]},
      "boundary_conditions": {"x-": "NBC", ..., "z+": "DBC"},
      "nodes":   [{"id": "n0", "position": [x, y, z], "ball_radius": 0.3}],
      "struts":  [{"id": "s0", "nodes": ["n0", "n1"], "radius": 0.5}],
      "windows": [{"id": "w0", "struts": ["s0", "s1", "s2", "s3"]}],
      "cells":   [{"id": "c0", "windows": ["w0", "w1", ...]}]
    }

All lengths are mm, ids are strings, `ball_radius` is optional.  Windows are
closed loops of struts (consecutive struts share a node); the windows of a
cell must form a closed surface.  Ordering is significant and preserved
byte-identically on round-trip.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import FACETS, Box


class FoamGraphError(ValueError):
    """Invalid foam graph input."""


@dataclass
class GraphNode:
    id: str
    position: np.ndarray
    ball_radius: float | None = None


@dataclass
class Strut:
    id: str
    nodes: tuple[str, str]
    radius: float


@dataclass
class Window:
    id: str
    struts: list[str]


@dataclass
class FluidCell:
    id: str
    windows: list[str]


@dataclass
class FoamGraph:
    nodes: list[GraphNode]
    struts: list[Strut]
    windows: list[Window]
    cells: list[FluidCell]
    domain: Box
    boundary_conditions: dict[str, str] = field(
        default_factory=lambda: {f: "NBC" for f in FACETS}
    )

    def node_index(self) -> dict[str, int]:
        return {n.id: i for i, n in enumerate(self.nodes)}

    def strut_index(self) -> dict[str, int]:
        return {s.id: i for i, s in enumerate(self.struts)}

    def window_index(self) -> dict[str, int]:
        return {w.id: i for i, w in enumerate(self.windows)}

    def window_node_loop(self, window: Window, struts_by_id=None) -> list[str]:
        """Ordered node ids around a window, following its strut loop."""
        struts = struts_by_id if struts_by_id is not None else {s.id: s for s in self.struts}
        loop = [struts[sid] for sid in window.struts]
        if len(loop) < 3:
            raise FoamGraphError(f"window {window.id} has fewer than 3 struts")
        # Orient the first strut so that it chains into the second.
        a, b = loop[0].nodes
        if a in loop[1].nodes and b not in loop[1].nodes:
            a, b = b, a
        nodes = [a, b]
        for s in loop[1:]:
            p, q = s.nodes
            if p == nodes[-1]:
                nodes.append(q)
            elif q == nodes[-1]:
                nodes.append(p)
            else:
                raise FoamGraphError(
                    f"window {window.id}: strut {s.id} does not chain into the loop"
                )
        if nodes[-1] != nodes[0]:
            raise FoamGraphError(f"window {window.id} is not a closed loop")
        return nodes[:-1]

    def validate(self) -> None:
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise FoamGraphError("duplicate node ids")
        node_ids = set(ids)
        strut_ids = set()
        for s in self.struts:
            if s.id in strut_ids:
                raise FoamGraphError(f"duplicate strut id {s.id}")
            strut_ids.add(s.id)
            for nid in s.nodes:
                if nid not in node_ids:
                    raise FoamGraphError(f"strut {s.id} references unknown node {nid}")
            if s.nodes[0] == s.nodes[1]:
                raise FoamGraphError(f"strut {s.id} is a loop on one node")
            if not np.isfinite(s.radius) or s.radius < 0:
                raise FoamGraphError(f"strut {s.id} has invalid radius")
        for n in self.nodes:
            if not np.all(np.isfinite(n.position)):
                raise FoamGraphError(f"node {n.id} has non-finite position")
        struts_by_id = {s.id: s for s in self.struts}
        window_ids = set()
        for w in self.windows:
            if w.id in window_ids:
                raise FoamGraphError(f"duplicate window id {w.id}")
            window_ids.add(w.id)
            for sid in w.struts:
                if sid not in strut_ids:
                    raise FoamGraphError(f"window {w.id} references unknown strut {sid}")
            self.window_node_loop(w, struts_by_id)
        window_use: dict[str, int] = {}
        for c in self.cells:
            for wid in c.windows:
                if wid not in window_ids:
                    raise FoamGraphError(f"cell {c.id} references unknown window {wid}")
                window_use[wid] = window_use.get(wid, 0) + 1
        for wid, count in window_use.items():
            if count > 2:
                raise FoamGraphError(f"window {wid} is used by {count} cells (max 2)")

    # -- JSON round-trip ----------------------------------------------------

    def to_json(self) -> str:
        def num(x):
            return float(x)

        doc = {
            "domain": {
                "min": [num(v) for v in self.domain.lo],
                "max": [num(v) for v in self.domain.hi],
            },
            "boundary_conditions": {f: self.boundary_conditions[f] for f in FACETS},
            "nodes": [
                {
                    "id": n.id,
                    "position": [num(v) for v in n.position],
                    **({"ball_radius": num(n.ball_radius)} if n.ball_radius is not None else {}),
                }
                for n in self.nodes
            ],
            "struts": [
                {"id": s.id, "nodes": [s.nodes[0], s.nodes[1]], "radius": num(s.radius)}
                for s in self.struts
            ],
            "windows": [{"id": w.id, "struts": list(w.struts)} for w in self.windows],
            "cells": [{"id": c.id, "windows": list(c.windows)} for c in self.cells],
        }
        return json.dumps(doc, indent=2) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def from_dict(cls, doc: dict) -> "FoamGraph":
        try:
            domain = Box(tuple(doc["domain"]["min"]), tuple(doc["domain"]["max"]))
            bc_doc = doc.get("boundary_conditions", {})
            bc = {}
            for f in FACETS:
                tag = bc_doc.get(f, "NBC")
                if tag not in ("DBC", "NBC"):
                    raise FoamGraphError(f"facet {f}: unknown boundary condition {tag!r}")
                bc[f] = tag
            nodes = [
                GraphNode(
                    str(n["id"]),
                    np.asarray(n["position"], dtype=float),
                    float(n["ball_radius"]) if "ball_radius" in n else None,
                )
                for n in doc.get("nodes", [])
            ]
            struts = [
                Strut(str(s["id"]), (str(s["nodes"][0]), str(s["nodes"][1])), float(s["radius"]))
                for s in doc.get("struts", [])
            ]
            windows = [
                Window(str(w["id"]), [str(x) for x in w["struts"]])
                for w in doc.get("windows", [])
            ]
            cells = [
                FluidCell(str(c["id"]), [str(x) for x in c["windows"]])
                for c in doc.get("cells", [])
            ]
        except (KeyError, TypeError, IndexError) as exc:
            raise FoamGraphError(f"malformed foam graph document: {exc}") from exc
        graph = cls(nodes, struts, windows, cells, domain, bc)
        graph.validate()
        return graph

    @classmethod
    def load(cls, path) -> "FoamGraph":
        with open(path) as fh:
            doc = json.load(fh)
        return cls.from_dict(doc)
