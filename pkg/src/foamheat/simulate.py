"""Time integration, energy audit, probes, and the homogenized 1D
analytic surrogate with diffusivity fitting.

Boundary inputs are piecewise-constant schedules per box facet:
Dirichlet temperatures feed border nodes of both phases, flux schedules
feed border edges (W per edge, positive into the domain).  The default
integrator is implicit Euler; the phase conductivity ratio makes the
system stiff, so explicit stepping is not offered.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize_scalar
from scipy.sparse.linalg import splu

from .geometry import FACETS
from .phassembly import StateSpaceModel
from .primal import NodeKind, PrimalComplex

INTEGRATORS = ("implicit-euler", "trapezoidal")


class SimulationError(RuntimeError):
    """Configuration or solver failure during time integration."""


Schedule = list[tuple[float, float]]


def _as_schedule(value) -> Schedule:
    if isinstance(value, (int, float)):
        return [(0.0, float(value))]
    sched = sorted((float(t), float(v)) for t, v in value)
    if not sched:
        raise SimulationError("empty boundary schedule")
    return sched


def schedule_value(sched: Schedule, t: float) -> float:
    out = sched[0][1]
    for t0, v in sched:
        if t >= t0 - 1e-15:
            out = v
        else:
            break
    return out


@dataclass
class SimConfig:
    dt: float
    horizon: float
    integrator: str = "implicit-euler"
    solver_tol: float = 1e-12
    initial_solid: float = 300.0
    initial_fluid: float | None = None
    dbc_solid: dict[str, Schedule] = field(default_factory=dict)
    dbc_fluid: dict[str, Schedule] | None = None
    flux_solid: dict[str, Schedule] = field(default_factory=dict)
    flux_fluid: dict[str, Schedule] = field(default_factory=dict)
    probes: list[tuple[str, str]] = field(default_factory=list)
    frame_stride: int = 0

    def validate(self) -> None:
        if self.dt <= 0:
            raise SimulationError("dt must be positive")
        if self.horizon < self.dt:
            raise SimulationError("horizon must cover at least one step")
        if self.integrator not in INTEGRATORS:
            raise SimulationError(f"unknown integrator {self.integrator!r}")
        for _, phase in self.probes:
            if phase not in ("solid", "fluid"):
                raise SimulationError(f"unknown probe phase {phase!r}")

    @classmethod
    def from_dict(cls, doc: dict) -> "SimConfig":
        def sched_map(section) -> dict[str, Schedule]:
            out = {}
            if section is None:
                return out
            for key, val in section.items():
                out[key] = _as_schedule(val)
            return out

        initial = doc.get("initial", {})
        probes = [
            (str(p["node"]), str(p.get("phase", "solid")))
            for p in doc.get("probes", [])
        ]
        cfg = cls(
            dt=float(doc["dt"]),
            horizon=float(doc["horizon"]),
            integrator=str(doc.get("integrator", "implicit-euler")),
            solver_tol=float(doc.get("solver_tol", 1e-12)),
            initial_solid=float(initial.get("solid", 300.0)),
            initial_fluid=(
                float(initial["fluid"]) if "fluid" in initial else None
            ),
            dbc_solid=sched_map(doc.get("dbc")),
            dbc_fluid=sched_map(doc.get("dbc_fluid")) if "dbc_fluid" in doc else None,
            flux_solid=sched_map(doc.get("flux")),
            flux_fluid=sched_map(doc.get("flux_fluid")) if "flux_fluid" in doc else sched_map(doc.get("flux")),
            probes=probes,
            frame_stride=int(doc.get("frame_stride", 0)),
        )
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "SimConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class SimulationTrace:
    times: np.ndarray
    probe_names: list[str]
    probe_temperatures: np.ndarray      # (n_times, n_probes), K
    energy_solid: np.ndarray            # J
    energy_fluid: np.ndarray
    boundary_energy: np.ndarray         # cumulative J through the boundary
    audit_residual: np.ndarray          # relative energy-balance defect/step
    frames: list[tuple[float, np.ndarray]] = field(default_factory=list)

    def to_csv(self) -> str:
        cols = ["t"] + self.probe_names + [
            "E_solid", "E_fluid", "E_boundary_cum", "audit_residual",
        ]
        lines = [",".join(cols)]
        for i, t in enumerate(self.times):
            row = [f"{t:.16e}"]
            row += [f"{v:.16e}" for v in self.probe_temperatures[i]]
            row += [
                f"{self.energy_solid[i]:.16e}",
                f"{self.energy_fluid[i]:.16e}",
                f"{self.boundary_energy[i]:.16e}",
                f"{self.audit_residual[i]:.16e}",
            ]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"

    def save_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_csv())


# ---------------------------------------------------------------------------
# stepping

class _Stepper:
    """Cached LU factorizations of the implicit stepping matrices."""

    def __init__(self, model: StateSpaceModel, dt: float, method: str, tol: float):
        self.model = model
        self.dt = dt
        self.method = method
        self.tol = tol
        n = model.n_states
        eye = sp.identity(n, format="csc")
        a = model.A.tocsc()
        if method == "implicit-euler":
            self.lhs = (eye - dt * a).tocsc()
        elif method == "trapezoidal":
            self.lhs = (eye - 0.5 * dt * a).tocsc()
            self.rhs_mat = (eye + 0.5 * dt * a).tocsr()
        else:
            raise SimulationError(f"unknown integrator {method!r}")
        self.lu = splu(self.lhs)

    def advance(self, x, u_now, u_next):
        dt, model = self.dt, self.model
        if self.method == "implicit-euler":
            rhs = x + dt * (model.B @ u_next)
        else:
            rhs = self.rhs_mat @ x + 0.5 * dt * (model.B @ (u_now + u_next))
        x_next = self.lu.solve(rhs)
        resid = np.linalg.norm(self.lhs @ x_next - rhs, ord=np.inf)
        scale = max(np.linalg.norm(rhs, ord=np.inf), 1.0)
        if not np.isfinite(resid) or resid / scale > self.tol:
            raise SimulationError(
                f"linear solve failed: residual {resid:.3e} (relative "
                f"{resid / scale:.3e}) exceeds tolerance {self.tol:.3e}"
            )
        return x_next

    def step_energy(self, x, x_next, u_now, u_next):
        """Boundary energy transferred during the step, per the scheme."""
        if self.method == "implicit-euler":
            return self.dt * self.model.boundary_power(x_next, u_next)
        return 0.5 * self.dt * (
            self.model.boundary_power(x, u_now)
            + self.model.boundary_power(x_next, u_next)
        )


def step(model: StateSpaceModel, x: np.ndarray, u: np.ndarray, dt: float,
         method: str = "implicit-euler", tol: float = 1e-12,
         u_now: np.ndarray | None = None) -> np.ndarray:
    """Single time step; `u` is the input at the end of the step."""
    if dt <= 0:
        raise SimulationError("dt must be positive")
    stepper = _Stepper(model, dt, method, tol)
    return stepper.advance(x, u if u_now is None else u_now, u)


# ---------------------------------------------------------------------------
# boundary input resolution

@dataclass
class BoundaryContext:
    """Everything the boundary schedules and exports need to know about
    the mesh: facet attribution of boundary ports, node identities and
    positions.  Built from a primal complex or restored from a bundle."""

    node_facet: list[str]               # DBC facet per border node
    edge_facet: list[str]               # NBC facet per border edge
    node_ids: list[str]
    node_kinds: list[str]               # NodeKind values
    node_positions: np.ndarray
    edge_nodes: list[tuple[int, int]]
    boundary_conditions: dict[str, str]

    @classmethod
    def from_primal(cls, model: StateSpaceModel, primal: PrimalComplex) -> "BoundaryContext":
        blocks = model.blocks
        box = primal.domain
        bcs = primal.boundary_conditions
        node_facet = []
        for n in blocks.border_nodes:
            pos = primal.node_positions[n]
            facet = next(
                (f for f in FACETS if bcs[f] == "DBC" and box.on_facet(pos, f)), None
            )
            if facet is None:
                raise SimulationError(f"border node {n} lies on no DBC facet")
            node_facet.append(facet)
        edge_facet = []
        for e in blocks.border_edges:
            tip = primal.edge_polylines[e][-1]
            facet = next(
                (f for f in FACETS if bcs[f] == "NBC" and box.on_facet(tip, f)), None
            )
            if facet is None:
                raise SimulationError(f"border edge {e} ends on no NBC facet")
            edge_facet.append(facet)
        return cls(
            node_facet=node_facet,
            edge_facet=edge_facet,
            node_ids=list(primal.node_ids),
            node_kinds=[k.value for k in primal.node_kinds],
            node_positions=primal.node_positions,
            edge_nodes=list(primal.skeleton.edge_nodes),
            boundary_conditions=dict(primal.boundary_conditions),
        )


class InputBuilder:
    """Resolve facet schedules into the model input vector u(t)."""

    def __init__(self, model: StateSpaceModel, ctx: BoundaryContext, cfg: SimConfig):
        self.model = model
        self.ctx = ctx
        self.node_facet = ctx.node_facet
        self.edge_facet = ctx.edge_facet

        def resolve(mapping: dict[str, Schedule], default=None):
            table = {}
            base = mapping.get("default", default)
            for f in FACETS:
                sched = mapping.get(f, base)
                table[f] = _as_schedule(sched) if sched is not None else None
            return table

        self.dbc_solid = resolve(cfg.dbc_solid, default=cfg.initial_solid)
        if cfg.dbc_fluid is None:
            self.dbc_fluid = self.dbc_solid
        else:
            self.dbc_fluid = resolve(cfg.dbc_fluid, default=cfg.initial_solid)
        self.flux_solid = resolve(cfg.flux_solid, default=0.0)
        self.flux_fluid = resolve(cfg.flux_fluid, default=0.0)

    def at(self, t: float) -> np.ndarray:
        ts = [schedule_value(self.dbc_solid[f], t) for f in self.node_facet]
        tf = [schedule_value(self.dbc_fluid[f], t) for f in self.node_facet]
        ps = [schedule_value(self.flux_solid[f], t) for f in self.edge_facet]
        pf = [schedule_value(self.flux_fluid[f], t) for f in self.edge_facet]
        return np.array(ts + tf + ps + pf, dtype=float)


def run(model: StateSpaceModel, cfg: SimConfig,
        source: PrimalComplex | BoundaryContext) -> SimulationTrace:
    """Integrate the model over the configured horizon.

    `source` supplies boundary facet attribution: the classified primal
    complex or a restored context.  Deterministic: fixed iteration order,
    cached factorization, no timing dependence.  The audit column records
    the per-step relative defect between the energy change and the
    boundary energy.
    """
    cfg.validate()
    n_steps = int(round(cfg.horizon / cfg.dt))
    if n_steps < 1:
        raise SimulationError("horizon must cover at least one step")

    ctx = (
        source
        if isinstance(source, BoundaryContext)
        else BoundaryContext.from_primal(model, source)
    )
    inputs = InputBuilder(model, ctx, cfg)
    blocks = model.blocks
    n_i = len(blocks.inner_nodes)

    init_f = cfg.initial_solid if cfg.initial_fluid is None else cfg.initial_fluid
    x = model.state_from_temperatures(cfg.initial_solid, init_f)

    # Probe resolution: inner probes read the state, border probes report
    # the imposed schedule.
    probe_names = []
    probe_getters = []
    node_of_id = {nid: i for i, nid in enumerate(ctx.node_ids)}
    inner_pos = {int(n): k for k, n in enumerate(blocks.inner_nodes)}
    border_pos = {int(n): k for k, n in enumerate(blocks.border_nodes)}
    for node_id, phase in cfg.probes:
        if node_id not in node_of_id:
            raise SimulationError(f"probe references unknown node {node_id!r}")
        idx = node_of_id[node_id]
        kind = ctx.node_kinds[idx]
        name = f"T_{phase}_{node_id}"
        if kind == NodeKind.INNER.value:
            k = inner_pos[idx]
            off = 0 if phase == "solid" else n_i
            cap = (model.capacity_solid if phase == "solid" else model.capacity_fluid)[k]
            probe_getters.append(
                lambda xv, t, k=k, off=off, cap=cap, u=None: xv[off + k] / cap
            )
        elif kind == NodeKind.BORDER.value:
            k = border_pos[idx]
            table = inputs.dbc_solid if phase == "solid" else inputs.dbc_fluid
            facet = inputs.node_facet[k]
            probe_getters.append(
                lambda xv, t, facet=facet, table=table: schedule_value(table[facet], t)
            )
        else:
            raise SimulationError(
                f"probe node {node_id!r} is an additional border node; "
                "probes must reference inner or border nodes"
            )
        probe_names.append(name)

    stepper = _Stepper(model, cfg.dt, cfg.integrator, cfg.solver_tol)

    times = np.zeros(n_steps + 1)
    probe_temps = np.zeros((n_steps + 1, len(probe_getters)))
    e_solid = np.zeros(n_steps + 1)
    e_fluid = np.zeros(n_steps + 1)
    e_boundary = np.zeros(n_steps + 1)
    audit = np.zeros(n_steps + 1)
    frames: list[tuple[float, np.ndarray]] = []

    def record(i, t, xv):
        times[i] = t
        for j, get in enumerate(probe_getters):
            probe_temps[i, j] = get(xv, t)
        e_solid[i] = float(np.sum(xv[:n_i]))
        e_fluid[i] = float(np.sum(xv[n_i:]))
        if cfg.frame_stride and (i % cfg.frame_stride == 0 or i == n_steps):
            frames.append((t, xv.copy()))

    record(0, 0.0, x)
    u_now = inputs.at(0.0)
    cum = 0.0
    for i in range(1, n_steps + 1):
        t_next = i * cfg.dt
        u_next = inputs.at(t_next)
        x_next = stepper.advance(x, u_now, u_next)
        w = stepper.step_energy(x, x_next, u_now, u_next)
        cum += w
        de = float(np.sum(x_next) - np.sum(x))
        scale = max(abs(float(np.sum(x_next))), 1.0)
        audit[i] = abs(de - w) / scale
        record(i, t_next, x_next)
        e_boundary[i] = cum
        x, u_now = x_next, u_next

    return SimulationTrace(
        times=times,
        probe_names=probe_names,
        probe_temperatures=probe_temps,
        energy_solid=e_solid,
        energy_fluid=e_fluid,
        boundary_energy=e_boundary,
        audit_residual=audit,
        frames=frames,
    )


# ---------------------------------------------------------------------------
# homogenized 1D surrogate

def analytic_1d(a_eff: float, length: float, t_bottom: float, t_top: float,
                t_initial: float, z, t, order: int = 200):
    """Series solution of the 1D heat equation with fixed-end temperatures.

    Initial condition is uniform `t_initial`; the ends are held at
    `t_bottom` (z=0) and `t_top` (z=length).  Returns the temperature; z
    and t may be arrays (broadcast).
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    z = np.asarray(z, dtype=float)
    t = np.asarray(t, dtype=float)
    zeta = z / length
    base = t_bottom + (t_top - t_bottom) * zeta
    acc = np.zeros(np.broadcast(z, t).shape)
    for n in range(1, order + 1):
        bn = 2.0 * ((t_initial - t_bottom) - ((-1.0) ** n) * (t_initial - t_top)) / (n * np.pi)
        k = n * np.pi / length
        acc = acc + bn * np.sin(k * z) * np.exp(-a_eff * k * k * t)
    return base + acc


def analytic_1d_tail(a_eff: float, length: float, t_bottom: float, t_top: float,
                     t_initial: float, t, order: int = 200) -> float:
    """Magnitude of the last retained series term (truncation indicator)."""
    n = order
    bn = 2.0 * ((t_initial - t_bottom) - ((-1.0) ** n) * (t_initial - t_top)) / (n * np.pi)
    k = n * np.pi / length
    return float(abs(bn) * np.exp(-a_eff * k * k * np.min(t)))


@dataclass
class SurrogateFit:
    diffusivity: float      # mm^2/s
    rms: float              # K
    order: int


def fit_diffusivity(trace: SimulationTrace, probes: list[tuple[str, float]],
                    length: float, t_bottom: float, t_top: float,
                    t_initial: float, bounds: tuple[float, float] = (0.01, 100.0),
                    order: int = 200) -> SurrogateFit:
    """Fit the surrogate diffusivity to probe series by bracketed search.

    `probes` pairs trace column names with their heights z (mm).
    """
    cols = []
    heights = []
    for name, z in probes:
        if name not in trace.probe_names:
            raise SimulationError(f"trace has no probe column {name!r}")
        cols.append(trace.probe_names.index(name))
        heights.append(float(z))
    data = trace.probe_temperatures[:, cols]
    if np.ptp(data) < 1e-12:
        raise SimulationError("nothing to fit: probe series are constant")
    times = trace.times
    zcol = np.array(heights)

    def rms(a):
        pred = analytic_1d(
            a, length, t_bottom, t_top, t_initial,
            zcol[None, :], times[:, None], order=order,
        )
        return float(np.sqrt(np.mean((pred - data) ** 2)))

    res = minimize_scalar(
        lambda la: rms(np.exp(la)),
        bounds=(np.log(bounds[0]), np.log(bounds[1])),
        method="bounded",
        options={"xatol": 1e-10},
    )
    a_best = float(np.exp(res.x))
    return SurrogateFit(diffusivity=a_best, rms=rms(a_best), order=order)
