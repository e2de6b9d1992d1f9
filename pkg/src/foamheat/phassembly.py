"""Assembly of the two-phase discrete heat model: skew-symmetric
interconnection, diagonal constitutive closures, and the explicit linear
state-space system.

Port layout of the interconnection (rows = storage rates and driving
forces, columns = temperatures and heat flow rates, n_i inner nodes,
n_e inner edges):

    rows    [dU_s (n_i) | dU_f (n_i) | F_s (n_e) | F_f (n_e) | F_sf (n_i)]
    cols    [T_s  (n_i) | T_f  (n_i) | P_s (n_e) | P_f (n_e) | P_sf (n_i)]
    inputs  [T_s_b (n_b) | T_f_b (n_b) | P_s_b (n_be) | P_f_b (n_be)]

The square matrix is integer-valued and exactly skew-symmetric.  Closing
it with the diagonal material laws eliminates forces and flow rates and
yields x_dot = A x + B u over the internal-energy state [U_s; U_f].

Units: state J, temperatures K, flow rates W; A entries 1/s.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .dual import GeometryTables
from .primal import IncidenceBlocks


class AssemblyError(ValueError):
    """Inconsistent shapes or unusable material/geometry input."""


@dataclass(frozen=True)
class MaterialParams:
    """Material constants; mm-g-s-K unit system.

    rho in g/mm^3, c in J/(g K), conductivity in W/(mm K), heat transfer
    coefficient in W/(mm^2 K).  Densities and heat capacities must be
    strictly positive; conductivities and the transfer coefficient may be
    zero to switch a transport path off.
    """

    rho_solid: float
    rho_fluid: float
    c_solid: float
    c_fluid: float
    conductivity_solid: float
    conductivity_fluid: float
    heat_transfer: float

    def validate(self) -> None:
        for name in ("rho_solid", "rho_fluid", "c_solid", "c_fluid"):
            if not getattr(self, name) > 0:
                raise AssemblyError(f"{name} must be strictly positive")
        for name in ("conductivity_solid", "conductivity_fluid", "heat_transfer"):
            if getattr(self, name) < 0:
                raise AssemblyError(f"{name} must be non-negative")

    @classmethod
    def aluminium_air(cls) -> "MaterialParams":
        """Aluminium skeleton in still air."""
        return cls(
            rho_solid=2.7e-3,
            rho_fluid=1.204e-6,
            c_solid=0.897,
            c_fluid=1.005,
            conductivity_solid=0.2,
            conductivity_fluid=2.6e-5,
            heat_transfer=1.0e-4,
        )

    @classmethod
    def from_dict(cls, doc: dict) -> "MaterialParams":
        try:
            mat = cls(
                rho_solid=float(doc["rho_solid"]),
                rho_fluid=float(doc["rho_fluid"]),
                c_solid=float(doc["c_solid"]),
                c_fluid=float(doc["c_fluid"]),
                conductivity_solid=float(doc["conductivity_solid"]),
                conductivity_fluid=float(doc["conductivity_fluid"]),
                heat_transfer=float(doc["heat_transfer"]),
            )
        except (KeyError, TypeError) as exc:
            raise AssemblyError(f"malformed material file: {exc}") from exc
        mat.validate()
        return mat

    @classmethod
    def load(cls, path) -> "MaterialParams":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class Interconnection:
    """Skew-symmetric power routing plus its boundary input matrix."""

    J: sp.csr_matrix
    B: sp.csr_matrix
    blocks: IncidenceBlocks

    @property
    def n_inner_nodes(self) -> int:
        return len(self.blocks.inner_nodes)

    @property
    def n_inner_edges(self) -> int:
        return len(self.blocks.inner_edges)

    def skew_defect(self) -> int:
        """Number of nonzero entries of J + J^T (must be zero)."""
        s = (self.J + self.J.transpose()).tocoo()
        return int(np.count_nonzero(s.data))


def assemble_interconnection(blocks: IncidenceBlocks) -> Interconnection:
    """Build the exactly skew-symmetric routing matrix from the splits."""
    d_ii = sp.csr_matrix(blocks.d1_ii, dtype=np.int64)
    d_ib = sp.csr_matrix(blocks.d1_ib, dtype=np.int64)
    d_bi = sp.csr_matrix(blocks.d1_bi, dtype=np.int64)
    n_i = d_ii.shape[1]
    n_e = d_ii.shape[0]
    n_b = d_ib.shape[1]
    n_be = d_bi.shape[0]
    if d_ib.shape[0] != n_e:
        raise AssemblyError("d1_ib row count does not match the inner edges")
    if d_bi.shape[1] != n_i:
        raise AssemblyError("d1_bi column count does not match the inner nodes")

    eye = sp.identity(n_i, dtype=np.int64, format="csr")
    z = lambda r, c: sp.csr_matrix((r, c), dtype=np.int64)

    J = sp.bmat(
        [
            [z(n_i, n_i), z(n_i, n_i), -d_ii.transpose(), z(n_i, n_e), eye],
            [z(n_i, n_i), z(n_i, n_i), z(n_i, n_e), -d_ii.transpose(), -eye],
            [d_ii, z(n_e, n_i), z(n_e, n_e), z(n_e, n_e), z(n_e, n_i)],
            [z(n_e, n_i), d_ii, z(n_e, n_e), z(n_e, n_e), z(n_e, n_i)],
            [-eye, eye, z(n_i, n_e), z(n_i, n_e), z(n_i, n_i)],
        ],
        format="csr",
        dtype=np.int64,
    )
    B = sp.bmat(
        [
            [z(n_i, n_b), z(n_i, n_b), -d_bi.transpose(), z(n_i, n_be)],
            [z(n_i, n_b), z(n_i, n_b), z(n_i, n_be), -d_bi.transpose()],
            [d_ib, z(n_e, n_b), z(n_e, n_be), z(n_e, n_be)],
            [z(n_e, n_b), d_ib, z(n_e, n_be), z(n_e, n_be)],
            [z(n_i, n_b), z(n_i, n_b), z(n_i, n_be), z(n_i, n_be)],
        ],
        format="csr",
        dtype=np.int64,
    )
    ic = Interconnection(J=J, B=B, blocks=blocks)
    if ic.skew_defect() != 0:
        raise AssemblyError("interconnection lost skew-symmetry")
    return ic


@dataclass
class ConstitutiveClosure:
    """Diagonal closures over all primal cells (J/K and W/K).

    Entries are indexed by primal node / edge; the state-space closure
    restricts them to the inner index sets.
    """

    heat_capacity_solid: np.ndarray     # per node, V_s * rho_s * c_s
    heat_capacity_fluid: np.ndarray
    conductance_solid: np.ndarray       # per edge, lambda_s * A_s / length
    conductance_fluid: np.ndarray
    transfer: np.ndarray                # per node, alpha * A_sf
    material: MaterialParams


def assemble_constitutive(geo: GeometryTables, mat: MaterialParams) -> ConstitutiveClosure:
    mat.validate()
    if np.any(geo.edge_length <= 0.0):
        bad = int(np.argmin(geo.edge_length))
        raise AssemblyError(f"degenerate edge {bad} (zero length)")
    if not (
        np.all(np.isfinite(geo.edge_area))
        and np.all(np.isfinite(geo.node_volume))
        and np.all(np.isfinite(geo.node_contact_area))
    ):
        raise AssemblyError("geometry tables contain non-finite entries")
    return ConstitutiveClosure(
        heat_capacity_solid=geo.node_volume_solid * mat.rho_solid * mat.c_solid,
        heat_capacity_fluid=geo.node_volume_fluid * mat.rho_fluid * mat.c_fluid,
        conductance_solid=mat.conductivity_solid * geo.edge_area_solid / geo.edge_length,
        conductance_fluid=mat.conductivity_fluid * geo.edge_area_fluid / geo.edge_length,
        transfer=mat.heat_transfer * geo.node_contact_area,
        material=mat,
    )


@dataclass
class StateSpaceModel:
    """Explicit linear model x_dot = A x + B u, x = [U_s_i; U_f_i] in J.

    Inputs follow the interconnection layout: border temperatures of both
    phases (K), then border-edge flow rates of both phases (W, positive
    into the domain).  Restricted diagonal vectors are kept for state and
    temperature conversions and for the structural energy audit.
    """

    A: sp.csr_matrix
    B: sp.csr_matrix
    blocks: IncidenceBlocks
    capacity_solid: np.ndarray      # J/K per inner node
    capacity_fluid: np.ndarray
    conductance_solid: np.ndarray   # W/K per inner edge
    conductance_fluid: np.ndarray
    transfer: np.ndarray            # W/K per inner node
    material: MaterialParams

    @property
    def n_states(self) -> int:
        return 2 * len(self.blocks.inner_nodes)

    @property
    def n_inputs(self) -> int:
        return 2 * len(self.blocks.border_nodes) + 2 * len(self.blocks.border_edges)

    def temperatures(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n = len(self.blocks.inner_nodes)
        return x[:n] / self.capacity_solid, x[n:] / self.capacity_fluid

    def state_from_temperatures(self, t_solid, t_fluid) -> np.ndarray:
        n = len(self.blocks.inner_nodes)
        t_solid = np.broadcast_to(np.asarray(t_solid, dtype=float), (n,))
        t_fluid = np.broadcast_to(np.asarray(t_fluid, dtype=float), (n,))
        return np.concatenate([t_solid * self.capacity_solid, t_fluid * self.capacity_fluid])

    def split_inputs(self, u: np.ndarray):
        n_b = len(self.blocks.border_nodes)
        n_be = len(self.blocks.border_edges)
        return (
            u[:n_b],
            u[n_b : 2 * n_b],
            u[2 * n_b : 2 * n_b + n_be],
            u[2 * n_b + n_be :],
        )

    def boundary_power(self, x: np.ndarray, u: np.ndarray) -> float:
        """Net boundary power (W) from per-edge conduction and flux ports.

        Recomputed structurally from the incidence splits and diagonal
        conductances, independently of the closed A and B matrices.
        """
        ts, tf = self.temperatures(x)
        tsb, tfb, psb, pfb = self.split_inputs(u)
        d_ii = self.blocks.d1_ii
        d_ib = self.blocks.d1_ib
        d_bi = self.blocks.d1_bi
        rowsum = np.asarray(d_ii.sum(axis=1)).ravel()
        power = 0.0
        fs = d_ii @ ts + d_ib @ tsb
        ff = d_ii @ tf + d_ib @ tfb
        power -= float(rowsum @ (self.conductance_solid * fs))
        power -= float(rowsum @ (self.conductance_fluid * ff))
        w = -np.asarray(d_bi.sum(axis=1)).ravel()
        power += float(w @ psb)
        power += float(w @ pfb)
        return power

    def total_energy(self, x: np.ndarray) -> float:
        return float(np.sum(x))

    def export_manifest(self) -> dict:
        return {
            "state_dimension": self.n_states,
            "input_dimension": self.n_inputs,
            "inner_nodes": [int(i) for i in self.blocks.inner_nodes],
            "border_nodes": [int(i) for i in self.blocks.border_nodes],
            "inner_edges": [int(i) for i in self.blocks.inner_edges],
            "border_edges": [int(i) for i in self.blocks.border_edges],
            "state_layout": "[U_solid(inner nodes); U_fluid(inner nodes)] (J)",
            "input_layout": "[T_solid(border nodes) K; T_fluid(border nodes) K; "
            "Flow_solid(border edges) W; Flow_fluid(border edges) W]",
            "units": {"A": "1/s", "B": "W/K and 1", "state": "J"},
        }


def close_state_space(ic: Interconnection, cc: ConstitutiveClosure,
                      capacity_floor: float = 1e-30) -> StateSpaceModel:
    """Eliminate forces and flow rates through the diagonal closures."""
    blocks = ic.blocks
    inner_nodes = blocks.inner_nodes
    inner_edges = blocks.inner_edges

    cs = cc.heat_capacity_solid[inner_nodes] if len(inner_nodes) else np.zeros(0)
    cf = cc.heat_capacity_fluid[inner_nodes] if len(inner_nodes) else np.zeros(0)
    ls = cc.conductance_solid[inner_edges] if len(inner_edges) else np.zeros(0)
    lf = cc.conductance_fluid[inner_edges] if len(inner_edges) else np.zeros(0)
    h = cc.transfer[inner_nodes] if len(inner_nodes) else np.zeros(0)

    for name, vec in (("solid", cs), ("fluid", cf)):
        if np.any(vec < capacity_floor):
            bad = int(np.argmin(vec))
            raise AssemblyError(
                f"{name} heat capacity below {capacity_floor} J/K at inner node "
                f"{int(inner_nodes[bad])}; the state equation would be singular"
            )

    d_ii = sp.csr_matrix(blocks.d1_ii, dtype=float)
    d_ib = sp.csr_matrix(blocks.d1_ib, dtype=float)
    d_bi = sp.csr_matrix(blocks.d1_bi, dtype=float)
    n_i = len(inner_nodes)
    n_b = d_ib.shape[1]
    n_be = d_bi.shape[0]

    lap_s = (d_ii.transpose() @ sp.diags(ls) @ d_ii).tocsr()
    lap_f = (d_ii.transpose() @ sp.diags(lf) @ d_ii).tocsr()
    hd = sp.diags(h)

    top = sp.hstack([-(lap_s + hd), hd])
    bot = sp.hstack([hd, -(lap_f + hd)])
    a_temp = sp.vstack([top, bot]).tocsr()
    inv_c = sp.diags(np.concatenate([1.0 / cs, 1.0 / cf]))
    a = (a_temp @ inv_c).tocsr()

    bt_s = -(d_ii.transpose() @ sp.diags(ls) @ d_ib)
    bt_f = -(d_ii.transpose() @ sp.diags(lf) @ d_ib)
    z = lambda r, c: sp.csr_matrix((r, c))
    b = sp.bmat(
        [
            [bt_s, z(n_i, n_b), -d_bi.transpose(), z(n_i, n_be)],
            [z(n_i, n_b), bt_f, z(n_i, n_be), -d_bi.transpose()],
        ],
        format="csr",
    )
    return StateSpaceModel(
        A=a,
        B=b,
        blocks=blocks,
        capacity_solid=cs,
        capacity_fluid=cf,
        conductance_solid=ls,
        conductance_fluid=lf,
        transfer=h,
        material=cc.material,
    )


def steady_state(model: StateSpaceModel, u: np.ndarray) -> np.ndarray:
    """Solve A x + B u = 0 for the stationary state."""
    from scipy.sparse.linalg import spsolve

    rhs = -(model.B @ u)
    return spsolve(model.A.tocsc(), rhs)
