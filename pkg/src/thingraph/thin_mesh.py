"""Uniform-grid thin domains and their cell-centred finite-difference Laplacians.

Each vertex domain ``sqrt(eps) * Q_v^0`` and each edge rectangle
``(0, l_e) x (0, eps)`` lives on its own uniform grid of step
``h = eps / n_w``; components are glued only through the contact plates,
where face ``j`` of a plate joins cross-section cell ``j`` of the edge end
column to the ``j``-th vertex cell along the plate side. The Laplacian only
sees this intrinsic geometry, so the realized edge length is ``l_e`` up to
grid rounding.

Discrete inner products are ``h**2 * dot`` on cells and ``h * dot`` on plate
faces, so matrix norms approximate continuum L2 norms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import shapely

from .graph_model import GraphError, MetricGraph, incidence
from .numerics import DEFAULT_TOLERANCES, sym_eigs_smallest


class MeshError(ValueError):
    pass


@dataclass
class VertexComponent:
    id: str
    offset: int
    mask: np.ndarray              # (nx, ny) bool, True inside the scaled template
    index: np.ndarray             # (nx, ny) global cell index, -1 outside
    polygon: np.ndarray           # integer corner coordinates in cell units

    @property
    def n_cells(self) -> int:
        return int(self.mask.sum())

    @property
    def cells(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + self.n_cells)


@dataclass
class EdgeComponent:
    id: str
    offset: int
    n_along: int
    n_across: int

    @property
    def n_cells(self) -> int:
        return self.n_along * self.n_across

    @property
    def cells(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + self.n_cells)

    def index(self, i, j):
        return self.offset + np.asarray(i) * self.n_across + np.asarray(j)


@dataclass
class Plate:
    vertex: str
    edge: str
    role: str                     # 'tail' or 'head' end of the edge
    side: int                     # template side index
    faces: np.ndarray             # trace dof indices
    edge_cells: np.ndarray
    vertex_cells: np.ndarray


@dataclass
class ThinDomainMesh:
    graph: MetricGraph
    epsilon: float
    n_w: int
    h: float
    vertices: list
    edges: list
    plates: list
    n_cells: int
    n_trace: int
    pairs: np.ndarray             # (m, 2) interior neighbour pairs inside components
    owner: np.ndarray             # component number per cell (vertices first, then edges)
    is_vertex_cell: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def realized_epsilon(self) -> float:
        return self.n_w * self.h

    @property
    def plate_dofs(self) -> dict:
        return {(p.vertex, p.edge, p.role): p.faces for p in self.plates}

    def vertex_component(self, vid: str) -> VertexComponent:
        for c in self.vertices:
            if c.id == vid:
                return c
        raise MeshError(f"no vertex component '{vid}'")

    def edge_component(self, eid: str) -> EdgeComponent:
        for c in self.edges:
            if c.id == eid:
                return c
        raise MeshError(f"no edge component '{eid}'")

    def vertex_faces(self, vid: str) -> np.ndarray:
        """Trace dofs of all plates of ``vid`` (contiguous, plate order)."""
        return np.concatenate([p.faces for p in self.plates if p.vertex == vid])

    def realized_area(self, vid: str) -> float:
        return self.vertex_component(vid).n_cells * self.h ** 2

    def realized_length(self, eid: str) -> float:
        return self.edge_component(eid).n_along * self.h

    def realized_template_areas(self) -> np.ndarray:
        """``|Q_v| / eps`` with the realized cell counts, in graph vertex order."""
        return np.array([self.realized_area(v.id) / self.realized_epsilon for v in self.graph.vertices])

    def realized_lengths(self) -> np.ndarray:
        return np.array([self.realized_length(e.id) for e in self.graph.edges])

    def summary(self) -> dict:
        out = {"epsilon": self.epsilon, "h": self.h, "n_w": self.n_w,
               "n_cells": self.n_cells, "n_trace": self.n_trace,
               "vertices": [], "edges": [], "plates": []}
        for v, c in zip(self.graph.vertices, self.vertices):
            out["vertices"].append({"id": v.id, "cells": c.n_cells,
                                    "area_nominal": self.epsilon * v.template_area,
                                    "area_realized": self.realized_area(v.id)})
        for e, c in zip(self.graph.edges, self.edges):
            out["edges"].append({"id": e.id, "cells": c.n_cells,
                                 "length_nominal": e.length,
                                 "length_realized": self.realized_length(e.id),
                                 "area_realized": c.n_cells * self.h ** 2})
        for p in self.plates:
            out["plates"].append({"vertex": p.vertex, "edge": p.edge, "role": p.role,
                                  "side": p.side, "dofs": len(p.faces)})
        return out

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2)


@dataclass
class SparseSymOperator:
    """Symmetric sparse matrix acting on grid functions (weight ``h**2``)."""

    matrix: sp.csr_matrix
    weight: float
    kind: str
    mesh: Optional[ThinDomainMesh] = None

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def restrict(self, cells) -> "SparseSymOperator":
        cells = np.asarray(cells)
        return SparseSymOperator(self.matrix[cells][:, cells].tocsr(), self.weight, self.kind, self.mesh)

    def toarray(self):
        return self.matrix.toarray()


def _vertex_grid(v, scale):
    pts = np.rint(np.asarray(v.template_polygon) * scale).astype(int)
    pts -= pts.min(axis=0)
    nx, ny = pts.max(axis=0)
    if nx < 1 or ny < 1:
        raise MeshError(f"vertex '{v.id}' template collapses on this grid")
    poly = shapely.Polygon(pts)
    if not poly.is_valid or poly.area == 0:
        raise MeshError(f"vertex '{v.id}' template degenerates after rounding to the grid")
    cx, cy = np.meshgrid(np.arange(nx) + 0.5, np.arange(ny) + 0.5, indexing="ij")
    mask = shapely.contains_xy(poly, cx, cy)
    return pts, mask


def build_mesh(graph: MetricGraph, epsilon: float, n_w: int) -> ThinDomainMesh:
    """Grid the thin domain for thickness ``epsilon`` with ``n_w`` cells across edges.

    Vertex template corners are scaled by ``sqrt(epsilon)`` and rounded to the
    nearest grid node; plates (``n_w`` faces) sit centred on their template
    side. Edge rectangles get ``round(l_e / h)`` cells along.
    """
    if n_w < 2:
        raise MeshError("n_w must be at least 2")
    if not epsilon > 0:
        raise MeshError("epsilon must be positive")
    h = epsilon / n_w
    scale = np.sqrt(epsilon) / h

    vcomps, offset = [], 0
    for v in graph.vertices:
        pts, mask = _vertex_grid(v, scale)
        index = -np.ones(mask.shape, dtype=np.int64)
        index[mask] = offset + np.arange(mask.sum())
        vcomps.append(VertexComponent(v.id, offset, mask, index, pts))
        offset += int(mask.sum())
    n_vertex_cells = offset

    ecomps = []
    for e in graph.edges:
        n_along = int(round(e.length / h))
        if n_along < 1:
            raise MeshError(f"edge '{e.id}' rectangle has nonpositive length on this grid")
        ecomps.append(EdgeComponent(e.id, offset, n_along, n_w))
        offset += n_along * n_w
    n_cells = offset

    pairs = []
    owner = np.empty(n_cells, dtype=np.int64)
    for k, c in enumerate(vcomps):
        owner[c.cells] = k
        idx = c.index
        for a, b in ((idx[:-1, :], idx[1:, :]), (idx[:, :-1], idx[:, 1:])):
            ok = (a >= 0) & (b >= 0)
            pairs.append(np.stack([a[ok], b[ok]], axis=1))
    for k, c in enumerate(ecomps):
        owner[c.cells] = len(vcomps) + k
        i, j = np.meshgrid(np.arange(c.n_along), np.arange(c.n_across), indexing="ij")
        idx = c.index(i, j)
        pairs.append(np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], axis=1))
        pairs.append(np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1))
    pairs = np.concatenate(pairs) if pairs else np.zeros((0, 2), dtype=np.int64)

    plates, n_trace = [], 0
    for v, vc in zip(graph.vertices, vcomps):
        for eid, role in incidence(graph, v.id):
            k = v.plate_sides[(eid, role)]
            p = vc.polygon[k]
            q = vc.polygon[(k + 1) % len(vc.polygon)]
            d = np.sign(q - p)
            n_side = int(np.abs(q - p).sum())
            if n_w >= n_side:
                raise MeshError(
                    f"plate does not fit: {n_w} faces on a {n_side}-cell side of vertex '{v.id}' "
                    f"(epsilon={epsilon})")
            normal = np.array([d[1], -d[0]])
            start = (n_side - n_w) // 2
            t = np.arange(start, start + n_w) + 0.5
            centres = p[None, :] + t[:, None] * d[None, :] - 0.5 * normal[None, :]
            ci = np.floor(centres).astype(int)
            if (ci < 0).any() or (ci[:, 0] >= vc.mask.shape[0]).any() or (ci[:, 1] >= vc.mask.shape[1]).any() \
                    or not vc.mask[ci[:, 0], ci[:, 1]].all():
                raise MeshError(f"plate cells of vertex '{v.id}' fall outside its template")
            vcells = vc.index[ci[:, 0], ci[:, 1]]
            ec = ecomps[[e.id for e in graph.edges].index(eid)]
            col = 0 if role == "tail" else ec.n_along - 1
            ecells = ec.index(col, np.arange(n_w))
            faces = np.arange(n_trace, n_trace + n_w)
            n_trace += n_w
            plates.append(Plate(v.id, eid, role, k, faces, ecells, vcells))

    is_vertex = np.zeros(n_cells, dtype=bool)
    is_vertex[:n_vertex_cells] = True
    mesh = ThinDomainMesh(graph, float(epsilon), int(n_w), float(h), vcomps, ecomps, plates,
                          n_cells, n_trace, pairs, owner, is_vertex)
    _check_plates(mesh)
    return mesh


def _check_plates(mesh):
    seen = set()
    for p in mesh.plates:
        cells = set(p.vertex_cells.tolist())
        if len(cells) != len(p.vertex_cells) or cells & seen:
            raise MeshError(f"plates of vertex '{p.vertex}' overlap")
        seen |= cells


def _laplacian(n, pairs, extra_diag=None):
    i, j = pairs[:, 0], pairs[:, 1]
    ones = np.ones(len(pairs))
    off = sp.coo_matrix((np.concatenate([-ones, -ones]), (np.concatenate([i, j]), np.concatenate([j, i]))),
                        shape=(n, n))
    deg = np.bincount(i, minlength=n) + np.bincount(j, minlength=n)
    diag = deg.astype(float)
    if extra_diag is not None:
        diag = diag + extra_diag
    return (off + sp.diags(diag)).tocsr()


def plate_coupling(mesh: ThinDomainMesh):
    """Unit-weight stiffness blocks of the face-trace extension.

    Returns ``(K0, B)`` where ``K0`` is the decoupled cell stiffness (half-cell
    Dirichlet on every plate face) and ``B`` the cell-to-face coupling; the
    face block is ``2*I`` on each side.
    """
    rows, cols = [], []
    for p in mesh.plates:
        rows += [p.edge_cells, p.vertex_cells]
        cols += [p.faces, p.faces]
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    B = sp.coo_matrix((-2.0 * np.ones(len(rows)), (rows, cols)), shape=(mesh.n_cells, mesh.n_trace)).tocsr()
    extra = np.bincount(rows, minlength=mesh.n_cells) * 2.0
    return _laplacian(mesh.n_cells, mesh.pairs, extra), B


def assemble_neumann(mesh: ThinDomainMesh) -> SparseSymOperator:
    """Five-point Neumann Laplacian on the whole thin domain (edges and vertices coupled)."""
    cross = [np.stack([p.edge_cells, p.vertex_cells], axis=1) for p in mesh.plates]
    pairs = np.concatenate([mesh.pairs] + cross)
    K = _laplacian(mesh.n_cells, pairs)
    return SparseSymOperator((K / mesh.h ** 2).tocsr(), mesh.h ** 2, "neumann", mesh)


def assemble_decoupled(mesh: ThinDomainMesh) -> SparseSymOperator:
    """Same stencil with homogeneous Dirichlet data on every plate."""
    K0, _ = plate_coupling(mesh)
    return SparseSymOperator((K0 / mesh.h ** 2).tocsr(), mesh.h ** 2, "decoupled", mesh)


def grid_laplacian(mask, h: float, dirichlet=()) -> sp.csr_matrix:
    """Five-point Laplacian on the cells of ``mask`` with Neumann walls.

    ``dirichlet`` lists boundary faces as ``(i, j, side)`` with side in
    ``'W','E','S','N'``; each gets a homogeneous Dirichlet condition.
    """
    mask = np.asarray(mask, bool)
    index = -np.ones(mask.shape, dtype=np.int64)
    index[mask] = np.arange(mask.sum())
    pairs = []
    for a, b in ((index[:-1, :], index[1:, :]), (index[:, :-1], index[:, 1:])):
        ok = (a >= 0) & (b >= 0)
        pairs.append(np.stack([a[ok], b[ok]], axis=1))
    n = int(mask.sum())
    extra = np.zeros(n)
    for i, j, _side in dirichlet:
        extra[index[i, j]] += 2.0
    return (_laplacian(n, np.concatenate(pairs), extra) / h ** 2).tocsr()


def zaremba_inverse_norm(mesh: ThinDomainMesh, v: str, tol: float = DEFAULT_TOLERANCES.eigen,
                         decoupled: Optional[SparseSymOperator] = None) -> float:
    """``1 / lambda_min`` of the mixed (plates Dirichlet, walls Neumann) Laplacian on ``Q_v``."""
    if decoupled is None:
        decoupled = assemble_decoupled(mesh)
    block = decoupled.restrict(mesh.vertex_component(v).cells)
    vals, _ = sym_eigs_smallest(block, 1, tol)
    return float(1.0 / vals[0])
