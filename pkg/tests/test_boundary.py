import numpy as np
import pytest
from hypothesis import given, strategies as st

from thingraph import boundary as bd
from thingraph.graph_model import CORPUS, corpus_graph
from thingraph.numerics import NumericalError, SpectrumHit, sym_eigs_smallest
from thingraph.thin_mesh import assemble_decoupled, assemble_neumann, build_mesh

EPS_SET = [2.0 ** -k for k in (3, 4, 5, 6)]


def test_lift_of_constant_is_constant(star_mesh):
    phi = np.zeros(star_mesh.n_trace)
    phi[star_mesh.vertex_faces("c")] = 1.0
    u = bd.harmonic_lift(star_mesh, "V", phi)
    c = star_mesh.vertex_component("c").cells
    assert np.abs(u[c] - 1).max() < 1e-12
    others = np.setdiff1d(np.flatnonzero(star_mesh.is_vertex_cell), c)
    assert np.abs(u[others]).max() < 1e-12


def test_edge_lift_is_linear(small_mesh):
    m = small_mesh
    phi = np.zeros(m.n_trace)
    tail = [p for p in m.plates if p.role == "tail"][0]
    phi[tail.faces] = 1.0
    u = bd.harmonic_lift(m, "E", phi)
    ec = m.edges[0]
    prof = u[ec.cells].reshape(ec.n_along, ec.n_across)
    x = (np.arange(ec.n_along) + 0.5) * m.h
    assert np.allclose(prof, (1 - x / m.realized_length("e0"))[:, None], atol=1e-12)
    assert prof.max() <= 1.0


def _vertex_lift_norm(mesh, v):
    calc = bd.calculus(mesh)
    faces, cells = mesh.vertex_faces(v), mesh.vertex_component(v).cells
    Phi = np.zeros((mesh.n_trace, len(faces)))
    Phi[faces, np.arange(len(faces))] = 1.0
    U = calc.lift(Phi, "V")[cells]
    return np.sqrt(mesh.h) * np.linalg.svd(U, compute_uv=False)[0]


def test_vertex_lift_norm_bounded(star3):
    norms = [_vertex_lift_norm(build_mesh(star3, eps, 4), "c") for eps in EPS_SET]
    assert max(norms) / min(norms) <= 4.0      # within a factor 2 of a common constant


def test_solution_operator_representation(star_mesh):
    calc = bd.calculus(star_mesh)
    rng = np.random.default_rng(3)
    phi = rng.standard_normal(star_mesh.n_trace)
    assert np.array_equal(calc.solution(0.0, phi), calc.lift(phi))
    z = 2 + 1j
    s = bd.solution_operator(star_mesh, "full", z, phi)
    back = s - z * calc.decoupled_resolvent(0.0, s)          # (1 - z A0^{-1}) S_z phi
    assert np.linalg.norm(back - calc.lift(phi)) < 1e-10 * np.linalg.norm(s)
    e = ~star_mesh.is_vertex_cell
    assert np.array_equal(s[e], calc.solution(z, phi, "E")[e])


def test_solution_close_to_lift_shrinks(star3):
    gaps = []
    for eps in EPS_SET[:3]:
        m = build_mesh(star3, eps, 4)
        calc = bd.calculus(m)
        faces, cells = m.vertex_faces("c"), m.vertex_component("c").cells
        Phi = np.zeros((m.n_trace, len(faces)))
        Phi[faces, np.arange(len(faces))] = 1.0
        D = calc.solution(-1.0, Phi, "V")[cells] - calc.lift(Phi, "V")[cells]
        gaps.append(np.sqrt(m.h) * np.linalg.svd(D, compute_uv=False)[0])
    assert gaps[0] > gaps[1] > gaps[2]


def test_edge_dtn_reduces_to_interval(small_mesh):
    m = small_mesh
    L = bd.dtn(m, "E").array
    U = bd.vertex_basis(m) / np.sqrt(m.h)           # weighted-orthonormal plate constants
    R = m.h * U.T @ L @ U
    l = m.realized_length("e0")
    assert np.allclose(R, -np.array([[1, -1], [-1, 1]]) / l, atol=1e-12)


@pytest.mark.parametrize("side", bd.SIDES)
def test_dtn_symmetric_nonpositive(star_mesh, side):
    L = bd.dtn(star_mesh, side)
    assert L.symmetry_defect() <= 1e-10
    assert np.linalg.eigvalsh(0.5 * (L.array + L.array.T)).max() <= 1e-10 * np.abs(L.array).max()


def test_m_function_laws(star_mesh):
    calc = bd.calculus(star_mesh)
    assert np.array_equal(calc.m_function(0).array, calc.dtn().array)
    for z in (2 + 1j, 2 - 1j, -1 + 0.5j):
        M = bd.m_function(star_mesh, "full", z).array
        Mc = bd.m_function(star_mesh, "full", np.conj(z)).array
        scale = np.abs(M).max()
        assert np.abs(Mc - M.conj().T).max() <= 1e-12 * scale
        H = (M - M.conj().T) / (2j * z.imag)
        assert np.linalg.eigvalsh(H).min() >= -1e-10 * scale
        parts = calc.m_function(z, "E").array + calc.m_function(z, "V").array
        assert np.abs(M - parts).max() <= 1e-12 * scale


def test_m_difference_identity(star_mesh):
    calc = bd.calculus(star_mesh)
    z, zeta = 2 + 1j, -1.0
    lhs = calc.m_function(z).array - calc.m_function(zeta).array
    S = calc.solution(zeta, np.eye(star_mesh.n_trace))           # S_zeta
    rhs = (z - zeta) * calc.solution_adjoint(np.conj(z), S)       # S*_{conj z} S_zeta
    assert np.abs(lhs - rhs).max() <= 1e-8 * np.abs(lhs).max()


def test_real_m_symmetric(star_mesh):
    M = bd.m_function(star_mesh, "full", -2.0)
    assert M.symmetry_defect() <= 1e-10


def test_inadmissible_real_z(small_mesh):
    lam = sym_eigs_smallest(assemble_decoupled(small_mesh), 1)[0][0]
    with pytest.raises(SpectrumHit):
        bd.m_function(small_mesh, "full", lam)


def test_projection_algebra(star_mesh):
    P = bd.vertex_projection(star_mesh).array
    assert np.allclose(P @ P, P, atol=1e-15) and np.array_equal(P, P.T)
    assert round(np.trace(P)) == star_mesh.graph.N
    U = bd.vertex_basis(star_mesh)
    assert np.allclose(P @ U, U) and np.allclose((np.eye(len(P)) - P) @ U, 0)


def test_projection_degree_one(small_mesh):
    P = bd.vertex_projection(small_mesh).array
    f = small_mesh.vertex_faces("a")
    assert np.allclose(P[np.ix_(f, f)], 1 / len(f))


def test_schur_frobenius_block_diagonal(star_mesh):
    P = bd.vertex_projection(star_mesh)
    s = bd.block_split(np.eye(star_mesh.n_trace), P)
    A = np.diag(np.arange(1.0, 5.0))
    D = np.diag(np.linspace(2, 3, s.D.shape[0]))
    W = np.hstack([s.U, s.V])
    M = W @ np.block([[A, np.zeros((4, D.shape[0]))], [np.zeros((D.shape[0], 4)), D]]) @ W.T
    inv = bd.schur_frobenius_invert(M, P).array
    s2 = bd.block_split(inv, P)
    assert np.allclose(s2.A, np.linalg.inv(A)) and np.allclose(s2.D, np.linalg.inv(D))
    assert np.abs(s2.B).max() < 1e-12


@given(st.integers(0, 2 ** 31 - 1))
def test_schur_frobenius_random_spd(seed):
    m = build_mesh(corpus_graph("single_edge"), 0.25, 4)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((m.n_trace, m.n_trace))
    M = X @ X.T + m.n_trace * np.eye(m.n_trace)
    inv = bd.schur_frobenius_invert(M, bd.vertex_projection(m)).array
    assert np.abs(inv - np.linalg.inv(M)).max() <= 1e-10 * np.abs(inv).max()
    assert np.abs(M @ inv - np.eye(m.n_trace)).max() <= 1e-8


def test_schur_frobenius_m_function(star_mesh):
    M = bd.m_function(star_mesh, "full", -1.0)
    inv = bd.schur_frobenius_invert(M, bd.vertex_projection(star_mesh)).array
    assert np.abs(M.array @ inv - np.eye(star_mesh.n_trace)).max() <= 1e-8


def test_schur_frobenius_singular_block(small_mesh):
    with pytest.raises(NumericalError, match="singular"):
        bd.schur_frobenius_invert(np.eye(small_mesh.n_trace) - bd.vertex_projection(small_mesh).array,
                                  bd.vertex_projection(small_mesh))


def test_krein_master_identity(small_mesh):
    m = small_mesh
    z = -1 + 0.5j
    A = assemble_neumann(m).toarray()
    ref = np.linalg.inv(A - z * np.eye(m.n_cells))
    I = np.eye(m.n_trace)
    got = bd.krein_resolvent(m, z, 0 * I, I, np.eye(m.n_cells))
    assert np.linalg.norm(got - ref, 2) <= 1e-9 * np.linalg.norm(ref, 2)


def test_krein_dirichlet_case(star_mesh):
    calc = bd.calculus(star_mesh)
    f = np.random.default_rng(0).standard_normal(star_mesh.n_cells)
    I = np.eye(star_mesh.n_trace)
    z = 2 + 1j
    assert np.array_equal(bd.krein_resolvent(star_mesh, z, I, 0 * I, f), calc.decoupled_resolvent(z, f + 0j))


def test_krein_projected_q(star_mesh):
    P = bd.vertex_projection(star_mesh).array
    M = bd.m_function(star_mesh, "full", 2 + 1j)
    Q = bd.krein_Q(M, np.eye(len(P)) - P, P)
    U = bd.vertex_basis(star_mesh)
    ref = -U @ np.linalg.inv(U.T @ M.array @ U) @ U.T
    assert np.abs(Q - ref).max() <= 1e-10 * np.abs(ref).max()


def test_krein_singular_condition(small_mesh):
    I = np.eye(small_mesh.n_trace)
    with pytest.raises(NumericalError):
        bd.krein_resolvent(small_mesh, -1.0, 0 * I, 0 * I, np.ones(small_mesh.n_cells))


@pytest.mark.parametrize("name", CORPUS)
def test_steklov_structure(name):
    g = corpus_graph(name)
    m = build_mesh(g, 1 / 16, 4)
    for v in g.vertices:
        vals, vecs = bd.steklov_spectrum(m, v.id, 2, vectors=True)
        assert abs(vals[0]) <= 1e-8 * abs(vals[1])
        v1 = vecs[:, 0] * np.sign(vecs[0, 0])
        assert v1.std() / abs(v1.mean()) <= 1e-6
        assert abs(vals[0]) <= abs(vals[1])


def test_steklov_k_range(small_mesh):
    with pytest.raises(ValueError):
        bd.steklov_spectrum(small_mesh, "a", 99)


def test_csv_dump(small_mesh, tmp_path):
    L = bd.dtn(small_mesh, "V")
    text = L.to_csv(tmp_path / "lam.csv")
    lines = text.splitlines()
    assert lines[0] == "# z=static side=V"
    assert lines[1].split(",")[:3] == ["row", "dof0", "dof1"]
    assert len(lines) == 2 + small_mesh.n_trace
    back = np.array([[float(x) for x in ln.split(",")[1:]] for ln in lines[2:]])
    assert np.array_equal(back, L.array)


@given(st.floats(-5, 5), st.floats(0.05, 3).flatmap(lambda y: st.sampled_from([y, -y])))
def test_herglotz_property(x, y):
    m = build_mesh(corpus_graph("single_edge"), 0.25, 4)
    z = complex(x, y)
    M = bd.m_function(m, "full", z).array
    H = (M - M.conj().T) / (2j * z.imag)
    assert np.linalg.eigvalsh(H).min() >= -1e-10 * np.abs(M).max()
