"""Oriented cells, integer chains, boundary/co-boundary operators and
chain-complex validation.

Topology is kept in exact integer arithmetic: boundary matrices are sparse
with entries in {-1, 0, +1} and the double-boundary products are required
to vanish exactly, not merely to within a tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp


class CellId(NamedTuple):
    """Dense per-dimension cell handle."""

    dimension: int
    index: int


@dataclass
class Chain:
    """Formal integer combination of cells of one dimension.

    Zero coefficients are never stored.
    """

    dimension: int
    coefficients: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        self.coefficients = {k: int(v) for k, v in self.coefficients.items() if v != 0}

    def is_empty(self) -> bool:
        return not self.coefficients

    def cells(self) -> list[CellId]:
        return [CellId(self.dimension, i) for i in sorted(self.coefficients)]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Chain)
            and self.dimension == other.dimension
            and self.coefficients == other.coefficients
        )


def _as_int_csr(mat) -> sp.csr_matrix:
    m = sp.csr_matrix(mat, dtype=np.int64)
    m.sum_duplicates()
    m.eliminate_zeros()
    return m


@dataclass(frozen=True)
class ComplexSkeleton:
    """Cell counts, boundary matrices and orientation records of a 3-complex.

    boundary[j] is the matrix of the boundary operator on j-chains with rows
    indexed by (j-1)-cells and columns by j-cells.  Orientation records
    (edge node pairs, face edge loops, volume face signs) are kept for
    skeletons built from geometry; purely algebraic skeletons (duals) may
    omit them.
    """

    counts: tuple[int, int, int, int]
    boundary_1: sp.csr_matrix
    boundary_2: sp.csr_matrix
    boundary_3: sp.csr_matrix
    edge_nodes: tuple[tuple[int, int], ...] | None = None
    face_loops: tuple[tuple[tuple[int, int], ...], ...] | None = None
    volume_faces: tuple[tuple[tuple[int, int], ...], ...] | None = None

    def __post_init__(self):
        for j, mat in ((1, self.boundary_1), (2, self.boundary_2), (3, self.boundary_3)):
            expect = (self.counts[j - 1], self.counts[j])
            if mat.shape != expect:
                raise ValueError(f"boundary matrix {j} has shape {mat.shape}, expected {expect}")

    @classmethod
    def build(cls, n_nodes, edge_nodes, face_loops, volume_faces) -> "ComplexSkeleton":
        """Assemble boundary matrices from orientation records.

        edge_nodes: (tail, head) per edge; face_loops: ordered (edge, sign)
        loops per face; volume_faces: (face, sign) collections per volume.
        """
        edge_nodes = tuple((int(a), int(b)) for a, b in edge_nodes)
        face_loops = tuple(tuple((int(e), int(s)) for e, s in loop) for loop in face_loops)
        volume_faces = tuple(tuple((int(f), int(s)) for f, s in vf) for vf in volume_faces)
        counts = (int(n_nodes), len(edge_nodes), len(face_loops), len(volume_faces))

        def coo(entries, shape):
            if entries:
                rows, cols, vals = zip(*entries)
            else:
                rows = cols = vals = ()
            return _as_int_csr(sp.coo_matrix((vals, (rows, cols)), shape=shape))

        d1 = coo(
            [(a, e, -1) for e, (a, _) in enumerate(edge_nodes)]
            + [(b, e, 1) for e, (_, b) in enumerate(edge_nodes)],
            (counts[0], counts[1]),
        )
        d2 = coo(
            [(e, f, s) for f, loop in enumerate(face_loops) for e, s in loop],
            (counts[1], counts[2]),
        )
        d3 = coo(
            [(f, v, s) for v, vf in enumerate(volume_faces) for f, s in vf],
            (counts[2], counts[3]),
        )
        return cls(counts, d1, d2, d3, edge_nodes, face_loops, volume_faces)

    def boundary_matrix(self, j: int) -> sp.csr_matrix:
        if j == 1:
            return self.boundary_1
        if j == 2:
            return self.boundary_2
        if j == 3:
            return self.boundary_3
        raise ValueError(f"no boundary operator for dimension {j}")


def boundary(c: Chain, skeleton: ComplexSkeleton) -> Chain:
    """Apply the boundary operator to a chain via the sparse matrix."""
    if c.dimension == 0:
        raise ValueError("no boundary of 0-chain")
    if not 1 <= c.dimension <= 3:
        raise ValueError(f"invalid chain dimension {c.dimension}")
    n = skeleton.counts[c.dimension]
    mat = skeleton.boundary_matrix(c.dimension).tocsc()
    out: dict[int, int] = {}
    for idx, coeff in c.coefficients.items():
        if not 0 <= idx < n:
            raise KeyError(f"unknown cell index {idx} of dimension {c.dimension}")
        col = mat.getcol(idx).tocoo()
        for row, val in zip(col.row, col.data):
            out[row] = out.get(row, 0) + coeff * int(val)
    return Chain(c.dimension - 1, out)


def coboundary_matrix(skeleton: ComplexSkeleton, j: int) -> sp.csr_matrix:
    """Co-boundary d^j acting on (j-1)-co-chains: the transposed boundary."""
    if not 1 <= j <= 3:
        raise ValueError(f"co-boundary dimension {j} out of range [1, 3]")
    return _as_int_csr(skeleton.boundary_matrix(j).transpose())


@dataclass
class ValidationReport:
    """Findings of validate_complex; empty lists mean a valid complex."""

    double_boundary: list[tuple[int, int, int, int]] = field(default_factory=list)
    entry_range: list[tuple[int, int, int, int]] = field(default_factory=list)
    orphans: list[CellId] = field(default_factory=list)
    shape_mismatches: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (
            self.double_boundary or self.entry_range or self.orphans or self.shape_mismatches
        )

    def summary(self) -> str:
        if self.ok:
            return "complex valid"
        parts = []
        if self.shape_mismatches:
            parts.append(f"{len(self.shape_mismatches)} shape mismatches")
        if self.entry_range:
            parts.append(f"{len(self.entry_range)} out-of-range entries")
        if self.double_boundary:
            parts.append(f"{len(self.double_boundary)} nonzero double-boundary entries")
        if self.orphans:
            parts.append(f"{len(self.orphans)} orphan cells")
        return "; ".join(parts)


def validate_complex(skeleton: ComplexSkeleton) -> ValidationReport:
    """Check the chain-complex property and structural sanity.

    Reports (j, row, col, value) for nonzero double-boundary entries and
    out-of-range matrix entries, plus orphan cells and shape mismatches.
    """
    report = ValidationReport()
    counts = skeleton.counts
    for j in (1, 2, 3):
        mat = skeleton.boundary_matrix(j)
        expect = (counts[j - 1], counts[j])
        if mat.shape != expect:
            report.shape_mismatches.append(
                f"boundary {j}: shape {mat.shape} != {expect}"
            )
            continue
        coo = mat.tocoo()
        for r, c, v in zip(coo.row, coo.col, coo.data):
            if v not in (-1, 1):
                report.entry_range.append((j, int(r), int(c), int(v)))
    if not report.shape_mismatches:
        for j in (2, 3):
            prod = (skeleton.boundary_matrix(j - 1) @ skeleton.boundary_matrix(j)).tocoo()
            for r, c, v in zip(prod.row, prod.col, prod.data):
                if v != 0:
                    report.double_boundary.append((j, int(r), int(c), int(v)))

    # Orphans: cells referenced by no higher cell and referencing nothing.
    for j in range(4):
        n = counts[j]
        if n == 0:
            continue
        refs_up = np.zeros(n, dtype=bool)
        refs_down = np.zeros(n, dtype=bool)
        if j < 3:
            up = skeleton.boundary_matrix(j + 1)
            if up.shape[0] == n:
                refs_up[np.unique(up.tocoo().row)] = True
        if j >= 1:
            down = skeleton.boundary_matrix(j)
            if down.shape[1] == n:
                nnz_per_col = np.diff(down.tocsc().indptr)
                refs_down[nnz_per_col > 0] = True
        for i in np.nonzero(~(refs_up | refs_down))[0]:
            report.orphans.append(CellId(j, int(i)))
    return report


def export_triplets(mat, path) -> None:
    """Write a sparse matrix as `row col value` lines, 0-based, row-major."""
    coo = sp.coo_matrix(mat)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        fh.write(f"# shape {coo.shape[0]} {coo.shape[1]}\n")
        for k in order:
            fh.write(f"{coo.row[k]} {coo.col[k]} {coo.data[k]:.17g}\n")


def format_triplets(mat) -> str:
    coo = sp.coo_matrix(mat)
    order = np.lexsort((coo.col, coo.row))
    lines = [f"# shape {coo.shape[0]} {coo.shape[1]}"]
    lines += [f"{coo.row[k]} {coo.col[k]} {coo.data[k]:.17g}" for k in order]
    return "\n".join(lines) + "\n"
