import json

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from thingraph.graph_model import CORPUS, corpus_graph
from thingraph.numerics import sym_eigs_smallest
from thingraph.thin_mesh import (MeshError, assemble_decoupled, assemble_neumann, build_mesh, grid_laplacian,
                                 zaremba_inverse_norm)


def test_single_edge_quarter(small_mesh):
    m = small_mesh
    assert m.h == 1 / 16
    for v in m.vertices:
        assert v.mask.shape == (8, 8) and v.n_cells == 64
    assert m.edges[0].n_along == 16 and m.edges[0].n_across == 4
    # independent area count: 2 squares of (sqrt(eps)/h)^2 cells plus l/h * n_w edge cells
    assert m.n_cells == 2 * 8 * 8 + 16 * 4
    assert m.n_trace == 8
    assert all(len(f) == 4 for f in m.plate_dofs.values())


def test_plate_does_not_fit(single_edge):
    with pytest.raises(MeshError, match="plate does not fit"):
        build_mesh(single_edge, 1.0, 4)


def test_n_w_minimum(single_edge):
    with pytest.raises(MeshError):
        build_mesh(single_edge, 0.25, 1)


def test_star_plates_disjoint(star_mesh):
    plates = [p for p in star_mesh.plates if p.vertex == "c"]
    assert len(plates) == 3
    face_sets = [set(p.faces.tolist()) for p in plates]
    cell_sets = [set(p.vertex_cells.tolist()) for p in plates]
    for i in range(3):
        for j in range(i + 1, 3):
            assert not face_sets[i] & face_sets[j]
            assert not cell_sets[i] & cell_sets[j]


@pytest.mark.parametrize("name", CORPUS)
@pytest.mark.parametrize("eps", [1 / 8, 1 / 32])
def test_realized_geometry_within_tolerance(name, eps):
    g = corpus_graph(name)
    m = build_mesh(g, eps, 4)
    for v in g.vertices:
        pts = np.asarray(v.template_polygon)
        perim = np.sqrt(eps) * np.abs(np.diff(np.vstack([pts, pts[:1]]), axis=0)).sum()
        assert abs(m.realized_area(v.id) - eps * v.template_area) <= m.h * perim
    for e in g.edges:
        area = m.edge_component(e.id).n_cells * m.h ** 2
        assert abs(area - eps * e.length) <= m.h * 2 * (e.length + eps)
    assert m.realized_epsilon == pytest.approx(eps)


def test_summary_json(small_mesh):
    s = json.loads(small_mesh.summary_json())
    assert s["n_cells"] == 192 and len(s["plates"]) == 2
    assert s["vertices"][0]["area_realized"] == pytest.approx(0.25)


@pytest.mark.parametrize("name", CORPUS)
def test_operators_symmetric_and_conservative(name):
    m = build_mesh(corpus_graph(name), 1 / 16, 4)
    A = assemble_neumann(m).matrix
    D = assemble_decoupled(m).matrix
    for M in (A, D):
        assert (M != M.T).nnz == 0
    assert np.abs(A @ np.ones(m.n_cells)).max() < 1e-9 * abs(A).max()


def test_neumann_kernel_one_dimensional(triangle_pendant):
    m = build_mesh(triangle_pendant, 1 / 16, 4)
    vals, vecs = sym_eigs_smallest(assemble_neumann(m), 2)
    assert abs(vals[0]) < 1e-10 * vals[1]
    v = vecs[:, 0] / vecs[0, 0]
    assert np.abs(v - 1).max() < 1e-8


def test_strip_is_1d_neumann():
    n = 12
    L = grid_laplacian(np.ones((n, 1), bool), 1.0)
    ref = sp.diags([-np.ones(n - 1), np.r_[1, 2 * np.ones(n - 2), 1], -np.ones(n - 1)], [-1, 0, 1])
    assert np.abs((L - ref).toarray()).max() == 0
    vals, _ = sym_eigs_smallest(L, 1)
    assert abs(vals[0]) < 1e-12


def test_unit_square_second_neumann_eigenvalue():
    vals, _ = sym_eigs_smallest(grid_laplacian(np.ones((8, 8), bool), 1 / 8), 2)
    assert abs(vals[1] - np.pi ** 2) < 0.05 * np.pi ** 2


def test_unit_square_mixed_eigenvalue():
    n = 8
    L = grid_laplacian(np.ones((n, n), bool), 1 / n, [(0, j, "W") for j in range(n)])
    vals, _ = sym_eigs_smallest(L, 1)
    assert abs(vals[0] - np.pi ** 2 / 4) < 0.05 * np.pi ** 2 / 4


def test_decoupled_edge_block_separable(small_mesh):
    m = small_mesh
    D = assemble_decoupled(m)
    cells = m.edges[0].cells
    vals = np.linalg.eigvalsh(D.restrict(cells).toarray())
    # cell-centred FD: Dirichlet ends (half-cell faces), Neumann sides
    n, k = m.edges[0].n_along, m.n_w
    h = m.h
    along = [4 / h ** 2 * np.sin(p * np.pi / (2 * n)) ** 2 for p in range(1, n + 1)]
    across = [4 / h ** 2 * np.sin(q * np.pi / (2 * k)) ** 2 for q in range(k)]
    exact = np.sort([a + b for a in along for b in across])
    assert np.allclose(vals, exact, rtol=1e-10)
    # continuum values (k pi / l)^2 + (m pi / eps)^2 approached for the lowest modes
    assert abs(vals[0] - np.pi ** 2) < 0.01 * np.pi ** 2


def test_decoupled_positive_and_block_diagonal(star_mesh):
    D = assemble_decoupled(star_mesh).matrix.tocoo()
    assert (star_mesh.owner[D.row] == star_mesh.owner[D.col]).all()
    vals, _ = sym_eigs_smallest(assemble_decoupled(star_mesh), 1)
    assert vals[0] > 0


def test_forms_agree_off_the_plates(star_mesh):
    A, D = assemble_neumann(star_mesh).matrix, assemble_decoupled(star_mesh).matrix
    rng = np.random.default_rng(0)
    u = rng.standard_normal(star_mesh.n_cells)
    touching = np.unique(np.concatenate([np.r_[p.edge_cells, p.vertex_cells] for p in star_mesh.plates]))
    u[touching] = 0.0
    assert abs(u @ A @ u - u @ D @ u) < 1e-9 * abs(u @ A @ u)


def test_zaremba_decreases_with_eps(single_edge):
    big = zaremba_inverse_norm(build_mesh(single_edge, 1 / 8, 4), "a")
    small = zaremba_inverse_norm(build_mesh(single_edge, 1 / 16, 4), "a")
    assert small < big


def test_refinement_second_order_on_smooth_pieces():
    # unit square Neumann: no corners where the boundary condition or angle is singular
    ev = [sym_eigs_smallest(grid_laplacian(np.ones((n, n), bool), 1 / n), 4)[0] for n in (8, 16, 32)]
    d = np.diff(ev, axis=0)[:, 1:]
    assert np.all(np.abs(d[0] / d[1] - 4) < 0.3 * 4)


def test_refinement_on_thin_domain_converges(single_edge):
    # re-entrant plate corners cap the rate below second order; successive changes still shrink
    ev = np.array([sym_eigs_smallest(assemble_neumann(build_mesh(single_edge, 0.25, nw)), 3)[0]
                   for nw in (4, 8, 16)])
    d = np.abs(np.diff(ev, axis=0))[:, 1:]
    ratio = d[0] / d[1]
    assert np.all((ratio > 2.0) & (ratio < 4 * 1.3))


@given(st.sampled_from([1 / 8, 1 / 16, 1 / 32]), st.integers(2, 6))
def test_mesh_invariants_property(eps, n_w):
    g = corpus_graph("star3")
    try:
        m = build_mesh(g, eps, n_w)
    except MeshError:
        return
    faces = np.concatenate([p.faces for p in m.plates])
    assert len(np.unique(faces)) == len(faces) == m.n_trace
    assert all(len(p.faces) == n_w for p in m.plates)
    assert m.h * n_w == pytest.approx(eps)
