"""Command-line pipeline: generate -> inspect -> assemble -> simulate.

Stages communicate through files; every command writes a run manifest with
content hashes of its inputs and outputs so runs can be reproduced and
diffed exactly.  Exit codes: 0 success, 1 numerical or validation failure,
2 input error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .chains import export_triplets, validate_complex
from .dual import build_dual, compute_geometry
from .foamgraph import FoamGraph, FoamGraphError
from .geometry import FACETS
from .lattice import LatticeError, LatticeSpec, generate
from .phassembly import (
    AssemblyError,
    MaterialParams,
    assemble_constitutive,
    assemble_interconnection,
    close_state_space,
)
from .primal import IncidenceBlocks, PrimalBuildError, build_primal, split_incidence
from .simulate import (
    BoundaryContext,
    InputBuilder,
    SimConfig,
    SimulationError,
    run,
    schedule_value,
)

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_INPUT = 2


class _Manifest:
    def __init__(self, command: str):
        self.doc = {
            "tool": "foamheat",
            "version": __version__,
            "command": command,
            "created_unix": time.time(),
            "inputs": [],
            "outputs": [],
            "timings_s": {},
        }
        self._t0 = time.perf_counter()
        self._last = self._t0

    def add_input(self, path):
        self.doc["inputs"].append({"path": str(path), "sha256": _sha256(path)})

    def add_output(self, path):
        self.doc["outputs"].append({"path": str(path), "sha256": _sha256(path)})

    def stage(self, name):
        now = time.perf_counter()
        self.doc["timings_s"][name] = now - self._last
        self._last = now

    def write(self, out_dir: Path):
        self.doc["timings_s"]["total"] = time.perf_counter() - self._t0
        path = out_dir / "manifest.json"
        with open(path, "w") as fh:
            json.dump(self.doc, fh, indent=2)
            fh.write("\n")
        return path


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_bc(path) -> dict[str, str]:
    with open(path) as fh:
        doc = json.load(fh)
    bc = {}
    for f in FACETS:
        tag = doc.get(f, "NBC")
        if tag not in ("DBC", "NBC"):
            raise FoamGraphError(f"facet {f}: unknown boundary condition {tag!r}")
        bc[f] = tag
    return bc


# ---------------------------------------------------------------------------
# commands

def cmd_generate(args) -> int:
    out = _out_dir(args)
    manifest = _Manifest("generate")
    manifest.add_input(args.spec)
    spec = LatticeSpec.load(args.spec)
    graph = generate(spec)
    manifest.stage("generate")
    path = out / args.graph_name
    graph.save(path)
    manifest.add_output(path)
    manifest.write(out)
    print(f"wrote {path}: {len(graph.nodes)} nodes, {len(graph.struts)} struts, "
          f"{len(graph.windows)} windows, {len(graph.cells)} cells")
    return EXIT_OK


def _inspect_report(graph: FoamGraph, bc=None) -> dict:
    primal = build_primal(graph, bc=bc)
    report = validate_complex(primal.skeleton)
    kinds = primal.kind_counts()
    doc = {
        "counts": {
            "nodes": primal.counts[0],
            "edges": primal.counts[1],
            "faces": primal.counts[2],
            "volumes": primal.counts[3],
        },
        "kinds": kinds,
        "validation": {"ok": report.ok, "summary": report.summary()},
        "state_dimension_both_phases": 2 * len(primal.inner_nodes()),
        "state_dimension_per_phase": int(len(primal.inner_nodes())),
    }
    if primal.counts[3]:
        dual = build_dual(primal)
        geo = compute_geometry(primal, dual)
        doc["geometry_totals"] = {
            "domain_volume_mm3": primal.domain.volume,
            "dual_volume_sum_mm3": float(geo.node_volume.sum()),
            "solid_volume_mm3": float(geo.node_volume_solid.sum()),
            "fluid_volume_mm3": float(geo.node_volume_fluid.sum()),
            "contact_area_mm2": float(geo.node_contact_area.sum()),
        }
    return doc


def cmd_inspect(args) -> int:
    graph = FoamGraph.load(args.graph)
    if not graph.nodes:
        print("empty complex: no nodes")
        return EXIT_OK
    bc = _load_bc(args.bc) if args.bc else None
    doc = _inspect_report(graph, bc)
    if args.json:
        print(json.dumps(doc, indent=2))
    else:
        c = doc["counts"]
        print(f"cells: {c['nodes']} nodes, {c['edges']} edges, "
              f"{c['faces']} faces, {c['volumes']} volumes")
        for name, counter in doc["kinds"].items():
            parts = ", ".join(f"{v} {k}" for k, v in sorted(counter.items()))
            print(f"  {name}: {parts}")
        print(f"validation: {doc['validation']['summary']}")
        print(f"state dimension: {doc['state_dimension_both_phases']} "
              f"({doc['state_dimension_per_phase']} inner nodes per phase)")
        if "geometry_totals" in doc:
            g = doc["geometry_totals"]
            print(f"geometry: domain {g['domain_volume_mm3']:.6g} mm^3, dual sum "
                  f"{g['dual_volume_sum_mm3']:.6g} mm^3, solid {g['solid_volume_mm3']:.6g} mm^3")
    if args.check == "topology" and not doc["validation"]["ok"]:
        return EXIT_NUMERICAL
    return EXIT_OK if doc["validation"]["ok"] else EXIT_NUMERICAL


def _build_model(graph, bc, materials):
    primal = build_primal(graph, bc=bc)
    report = validate_complex(primal.skeleton)
    if not report.ok:
        raise PrimalBuildError(f"complex validation failed: {report.summary()}")
    dual = build_dual(primal)
    geo = compute_geometry(primal, dual)
    blocks = split_incidence(primal)
    ic = assemble_interconnection(blocks)
    cc = assemble_constitutive(geo, materials)
    model = close_state_space(ic, cc)
    return primal, dual, geo, ic, model


def cmd_assemble(args) -> int:
    out = _out_dir(args)
    manifest = _Manifest("assemble")
    manifest.add_input(args.graph)
    manifest.add_input(args.materials)
    graph = FoamGraph.load(args.graph)
    materials = MaterialParams.load(args.materials)
    bc = None
    if args.bc:
        manifest.add_input(args.bc)
        bc = _load_bc(args.bc)
    manifest.stage("load")

    primal, dual, geo, ic, model = _build_model(graph, bc, materials)
    manifest.stage("assemble")

    if args.check == "skew":
        defect = ic.skew_defect()
        print(f"skew check: {defect} nonzero entries in J + J^T")
        if defect != 0:
            return EXIT_NUMERICAL

    outputs = {
        "A.txt": model.A,
        "B.txt": model.B,
        "C_solid.txt": _diag(model.capacity_solid),
        "C_fluid.txt": _diag(model.capacity_fluid),
        "Lambda_solid.txt": _diag(model.conductance_solid),
        "Lambda_fluid.txt": _diag(model.conductance_fluid),
        "H.txt": _diag(model.transfer),
        "d1_ii.txt": model.blocks.d1_ii,
        "d1_ib.txt": model.blocks.d1_ib,
        "d1_bi.txt": model.blocks.d1_bi,
    }
    for name, mat in outputs.items():
        export_triplets(mat, out / name)
        manifest.add_output(out / name)

    ctx = BoundaryContext.from_primal(model, primal)
    doc = model.export_manifest()
    doc["node_ids"] = primal.node_ids
    doc["node_positions_mm"] = [list(map(float, p)) for p in primal.node_positions]
    doc["boundary_conditions"] = primal.boundary_conditions
    doc["domain"] = {"min": list(primal.domain.lo), "max": list(primal.domain.hi)}
    doc["node_kinds"] = [k.value for k in primal.node_kinds]
    doc["border_node_facets"] = ctx.node_facet
    doc["border_edge_facets"] = ctx.edge_facet
    doc["edge_nodes"] = [[int(a), int(b)] for a, b in primal.skeleton.edge_nodes]
    doc["geometry_totals"] = {
        "dual_volume_sum_mm3": float(geo.node_volume.sum()),
        "domain_volume_mm3": primal.domain.volume,
    }
    if len(model.blocks.border_nodes) == 0 and model.n_states <= 400 and model.n_states > 0:
        eig = np.linalg.eigvals(model.A.toarray())
        doc["insulated_spectrum"] = {
            "min_abs_eigenvalue": float(np.min(np.abs(eig))),
            "max_real_part": float(np.max(eig.real)),
        }
        print(f"insulated model: smallest |eigenvalue| = "
              f"{doc['insulated_spectrum']['min_abs_eigenvalue']:.3e} 1/s")
    model_path = out / "model.json"
    with open(model_path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    manifest.add_output(model_path)
    manifest.stage("export")
    manifest.write(out)
    print(f"model bundle written to {out} (states {model.n_states}, inputs {model.n_inputs})")
    return EXIT_OK


def _diag(vec):
    import scipy.sparse as sp

    n = len(vec)
    return sp.diags(vec, format="csr") if n else sp.csr_matrix((0, 0))


def _read_triplets(path):
    import scipy.sparse as sp

    rows, cols, vals = [], [], []
    shape = None
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                parts = line.split()
                shape = (int(parts[2]), int(parts[3]))
                continue
            r, c, v = line.split()
            rows.append(int(r))
            cols.append(int(c))
            vals.append(float(v))
    if shape is None:
        raise FoamGraphError(f"{path}: missing shape header")
    return sp.csr_matrix(sp.coo_matrix((vals, (rows, cols)), shape=shape))


def load_model_bundle(bundle_dir):
    """Restore a state-space model and boundary context from an assemble run."""
    from .phassembly import StateSpaceModel

    bundle = Path(bundle_dir)
    with open(bundle / "model.json") as fh:
        doc = json.load(fh)
    blocks = IncidenceBlocks(
        d1_ii=_read_triplets(bundle / "d1_ii.txt").astype(np.int64),
        d1_ib=_read_triplets(bundle / "d1_ib.txt").astype(np.int64),
        d1_bi=_read_triplets(bundle / "d1_bi.txt").astype(np.int64),
        inner_nodes=np.array(doc["inner_nodes"], dtype=int),
        border_nodes=np.array(doc["border_nodes"], dtype=int),
        inner_edges=np.array(doc["inner_edges"], dtype=int),
        border_edges=np.array(doc["border_edges"], dtype=int),
    )

    def diag_vec(name, n):
        mat = _read_triplets(bundle / name)
        return mat.diagonal() if n else np.zeros(0)

    n_i = len(blocks.inner_nodes)
    model = StateSpaceModel(
        A=_read_triplets(bundle / "A.txt"),
        B=_read_triplets(bundle / "B.txt"),
        blocks=blocks,
        capacity_solid=diag_vec("C_solid.txt", n_i),
        capacity_fluid=diag_vec("C_fluid.txt", n_i),
        conductance_solid=diag_vec("Lambda_solid.txt", len(blocks.inner_edges)),
        conductance_fluid=diag_vec("Lambda_fluid.txt", len(blocks.inner_edges)),
        transfer=diag_vec("H.txt", n_i),
        material=None,
    )
    ctx = BoundaryContext(
        node_facet=list(doc["border_node_facets"]),
        edge_facet=list(doc["border_edge_facets"]),
        node_ids=list(doc["node_ids"]),
        node_kinds=list(doc["node_kinds"]),
        node_positions=np.array(doc["node_positions_mm"], dtype=float),
        edge_nodes=[tuple(e) for e in doc["edge_nodes"]],
        boundary_conditions=dict(doc["boundary_conditions"]),
    )
    return model, ctx


def cmd_simulate(args) -> int:
    if bool(args.bundle) == bool(args.graph):
        print("error: pass exactly one of --graph or --bundle", file=sys.stderr)
        return EXIT_INPUT
    out = _out_dir(args)
    manifest = _Manifest("simulate")
    manifest.add_input(args.sim)
    cfg = SimConfig.load(args.sim)

    if args.bundle:
        manifest.add_input(Path(args.bundle) / "model.json")
        model, ctx = load_model_bundle(args.bundle)
        manifest.stage("load")
    else:
        if not args.materials:
            print("error: --materials is required with --graph", file=sys.stderr)
            return EXIT_INPUT
        manifest.add_input(args.graph)
        manifest.add_input(args.materials)
        graph = FoamGraph.load(args.graph)
        materials = MaterialParams.load(args.materials)
        bc = None
        if args.bc:
            manifest.add_input(args.bc)
            bc = _load_bc(args.bc)
        manifest.stage("load")
        primal, dual, geo, ic, model = _build_model(graph, bc, materials)
        ctx = BoundaryContext.from_primal(model, primal)
        manifest.stage("assemble")

    formats = args.format.split(",") if args.format else ["csv"]
    if "vtk" in formats and cfg.frame_stride == 0:
        cfg.frame_stride = max(1, int(round(cfg.horizon / cfg.dt)) // 20)

    trace = run(model, cfg, ctx)
    manifest.stage("simulate")

    if args.check == "energy":
        worst = float(np.max(trace.audit_residual))
        print(f"energy audit: max relative residual {worst:.3e}")
        if worst > 100.0 * cfg.solver_tol:
            return EXIT_NUMERICAL

    if "csv" in formats:
        path = out / "trace.csv"
        trace.save_csv(path)
        manifest.add_output(path)
    if "vtk" in formats:
        for i, (t, x) in enumerate(trace.frames):
            path = out / f"frame_{i:04d}.vtk"
            write_vtk_frame(path, ctx, model, cfg, t, x)
            manifest.add_output(path)
    manifest.stage("export")
    manifest.write(out)
    print(f"trace written to {out} ({len(trace.times)} samples, "
          f"max audit residual {float(np.max(trace.audit_residual)):.3e})")
    return EXIT_OK


def write_vtk_frame(path, ctx: BoundaryContext, model, cfg, t, x) -> None:
    """Legacy ASCII VTK unstructured grid: nodes as points, edges as lines.

    Point data carries both phase temperatures; nodes without state report
    the imposed boundary value (DBC) or their attached interior value.
    """
    blocks = model.blocks
    ts, tf = model.temperatures(x)
    n_nodes = len(ctx.node_positions)
    t_solid = np.full(n_nodes, np.nan)
    t_fluid = np.full(n_nodes, np.nan)
    for k, n in enumerate(blocks.inner_nodes):
        t_solid[n] = ts[k]
        t_fluid[n] = tf[k]
    inputs = InputBuilder(model, ctx, cfg)
    for k, n in enumerate(blocks.border_nodes):
        facet = inputs.node_facet[k]
        t_solid[n] = schedule_value(inputs.dbc_solid[facet], t)
        t_fluid[n] = schedule_value(inputs.dbc_fluid[facet], t)
    # Additional border nodes inherit the interior end of their edge.
    for e in blocks.border_edges:
        a, b = ctx.edge_nodes[e]
        for tip, src in ((b, a), (a, b)):
            if np.isnan(t_solid[tip]) and not np.isnan(t_solid[src]):
                t_solid[tip] = t_solid[src]
                t_fluid[tip] = t_fluid[src]
    t_solid = np.nan_to_num(t_solid, nan=cfg.initial_solid)
    fluid_default = cfg.initial_solid if cfg.initial_fluid is None else cfg.initial_fluid
    t_fluid = np.nan_to_num(t_fluid, nan=fluid_default)

    edges = ctx.edge_nodes
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 2.0\n")
        fh.write(f"foamheat t={t:.16e} s\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {n_nodes} double\n")
        for p in ctx.node_positions:
            fh.write(f"{p[0]:.16e} {p[1]:.16e} {p[2]:.16e}\n")
        fh.write(f"CELLS {len(edges)} {3 * len(edges)}\n")
        for a, b in edges:
            fh.write(f"2 {a} {b}\n")
        fh.write(f"CELL_TYPES {len(edges)}\n")
        for _ in edges:
            fh.write("3\n")
        fh.write(f"POINT_DATA {n_nodes}\n")
        fh.write("SCALARS T_solid double 1\nLOOKUP_TABLE default\n")
        for v in t_solid:
            fh.write(f"{v:.16e}\n")
        fh.write("SCALARS T_fluid double 1\nLOOKUP_TABLE default\n")
        for v in t_fluid:
            fh.write(f"{v:.16e}\n")


# ---------------------------------------------------------------------------
# pitch sweep helper (state-dimension search for Kelvin cubes)

def kelvin_pitch_sweep(length: float = 40.0, strut_radius: float = 0.4,
                       candidates=None, target: int | None = None):
    """State dimensions of Kelvin cubes over (pitch, offset) candidates.

    Candidates are (pitch_steps k, ox, oy, oz) with pitch = 4*length/k and
    offsets in pitch/32 steps.  Returns a list of (candidate, dimension);
    stops early when `target` is hit.
    """
    bc = {"x-": "NBC", "x+": "NBC", "y-": "NBC", "y+": "NBC",
          "z-": "DBC", "z+": "DBC"}
    if candidates is None:
        candidates = [(k, 4, 4, 0) for k in range(10, 18)]
    rows = []
    for k, ox, oy, oz in candidates:
        pitch = 4.0 * length / k
        u = pitch / 32.0
        spec = LatticeSpec("kelvin", (length, length, length), pitch,
                           strut_radius, dict(bc), offset=(ox * u, oy * u, oz * u))
        graph = generate(spec)
        primal = build_primal(graph)
        dim = 2 * len(primal.inner_nodes())
        rows.append(((k, ox, oy, oz), dim))
        if target is not None and dim == target:
            break
    return rows


# ---------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="foamheat",
        description="Discrete two-phase heat transfer on open-cell foams",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="lattice spec -> foam graph JSON")
    g.add_argument("--spec", required=True)
    g.add_argument("--out-dir", required=True)
    g.add_argument("--graph-name", default="foam.json")
    g.set_defaults(func=cmd_generate)

    i = sub.add_parser("inspect", help="classify, validate and count cells")
    i.add_argument("--graph", required=True)
    i.add_argument("--bc")
    i.add_argument("--json", action="store_true")
    i.add_argument("--check", choices=["topology"])
    i.set_defaults(func=cmd_inspect)

    a = sub.add_parser("assemble", help="foam graph -> state-space model bundle")
    a.add_argument("--graph", required=True)
    a.add_argument("--materials", required=True)
    a.add_argument("--bc")
    a.add_argument("--out-dir", required=True)
    a.add_argument("--check", choices=["skew"])
    a.set_defaults(func=cmd_assemble)

    s = sub.add_parser("simulate", help="run a transient and export the trace")
    s.add_argument("--graph")
    s.add_argument("--bundle", help="model bundle directory from `assemble`")
    s.add_argument("--materials")
    s.add_argument("--sim", required=True)
    s.add_argument("--bc")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--format", default="csv", help="csv,vtk")
    s.add_argument("--check", choices=["energy"])
    s.set_defaults(func=cmd_simulate)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}",
              file=sys.stderr)
        return EXIT_INPUT
    except (FoamGraphError, LatticeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (PrimalBuildError, AssemblyError, SimulationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
