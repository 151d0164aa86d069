import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from thingraph.numerics import (NumericalError, OpAction, SpectrumHit, Tolerances, bracket_roots, factorize,
                                opnorm_power, sym_eigs_smallest)


def lap1d(n, dirichlet=True):
    main = 2.0 * np.ones(n)
    if not dirichlet:
        main[0] = main[-1] = 1.0
    return sp.diags([-np.ones(n - 1), main, -np.ones(n - 1)], [-1, 0, 1]).tocsc()


def test_identity_solve_returns_rhs():
    b = np.arange(5.0)
    assert np.allclose(factorize(sp.identity(5), 0.0).solve(b), b)


def test_shifted_laplacian_matches_dense():
    A = lap1d(4)
    b = np.eye(4)[0]
    x = factorize(A, -1.0).solve(b)
    ref = np.linalg.solve(A.toarray() + np.eye(4), b)
    assert np.abs(x - ref).max() < 1e-12


def test_complex_shift_and_mixed_rhs():
    A = lap1d(30)
    z = 0.7 + 0.3j
    b = np.random.default_rng(0).standard_normal(30) * (1 + 2j)
    x = factorize(A, z).solve(b)
    assert np.abs((A.toarray() - z * np.eye(30)) @ x - b).max() < 1e-12
    # real shift, complex data through the real factorization
    s = factorize(A, -0.5)
    x = s.solve(b)
    assert np.abs((A.toarray() + 0.5 * np.eye(30)) @ x - b).max() < 1e-12
    assert s.last_residual < 1e-14


def test_shift_at_eigenvalue_is_rejected():
    A = sp.diags([1.0, 2.0, 3.0]).tocsc()
    with pytest.raises(SpectrumHit):
        factorize(A, 2.0)


def test_mass_scaling():
    A = lap1d(6)
    m = np.linspace(1, 2, 6)
    x = factorize(A, 0.25, mass=m).solve(np.ones(6))
    assert np.allclose((A.toarray() - 0.25 * np.diag(m)) @ x, 1.0)


def test_diag_smallest_two():
    vals, _ = sym_eigs_smallest(sp.diags([3.0, 1.0, 2.0]), 2)
    assert np.allclose(vals, [1.0, 2.0])


def test_dirichlet_interval_lowest_eigenvalue():
    n = 100
    A = lap1d(n) * n ** 2
    exact = 4 * n ** 2 * np.sin(np.pi / (2 * (n + 1))) ** 2
    for dense_below in (400, 10):      # dense path and shift-invert path
        vals, _ = sym_eigs_smallest(A, 1, dense_below=dense_below)
        assert abs(vals[0] - exact) < 1e-10 * exact


def test_neumann_kernel_is_constant():
    vals, vecs = sym_eigs_smallest(lap1d(500, dirichlet=False), 2)
    assert abs(vals[0]) < 1e-10
    v = vecs[:, 0] / vecs[0, 0]
    assert np.allclose(v, 1.0, atol=1e-8)


def test_eigs_reproducible():
    A = lap1d(600, dirichlet=False) + sp.diags(np.linspace(0, 1, 600))
    a, _ = sym_eigs_smallest(A, 3)
    b, _ = sym_eigs_smallest(A, 3)
    assert np.array_equal(a, b)


def test_opnorm_examples():
    assert abs(opnorm_power(OpAction.from_matrix(np.diag([3.0, 1.0]))).value - 3.0) < 3e-3
    rng = np.random.default_rng(4)
    u, v = rng.standard_normal(7), rng.standard_normal(7)
    est = opnorm_power(OpAction.from_matrix(np.outer(u, v)))
    assert abs(est.value - np.linalg.norm(u) * np.linalg.norm(v)) < 1e-3 * est.value
    assert est.converged


def test_opnorm_random_against_svd():
    M = np.random.default_rng(11).standard_normal((50, 50))
    est = opnorm_power(OpAction.from_matrix(M), 1e-3)
    top = np.linalg.svd(M, compute_uv=False)[0]
    assert abs(est.value - top) <= 1e-3 * top


def test_opnorm_iteration_cap_is_flagged():
    M = np.diag([1.0, 1.0 - 1e-9, 0.5])       # nearly degenerate top: slow but exact value known
    est = opnorm_power(OpAction.from_matrix(M), tol=1e-16, maxiter=3)
    assert not est.converged and est.iterations == 3


def test_adjoint_defect():
    M = np.random.default_rng(2).standard_normal((9, 9)) + 1j
    assert OpAction.from_matrix(M).adjoint_defect() < 1e-14
    bad = OpAction(9, lambda x: M @ x, lambda y: M @ y)
    assert bad.adjoint_defect() > 1e-3


def test_bracket_sin():
    br = bracket_roots(np.sin, 1.0, 7.0)
    assert np.allclose(br.roots, [np.pi, 2 * np.pi], atol=1e-10)


def test_bracket_even_root_missed():
    assert bracket_roots(lambda x: x * x, -1.0, 1.0, n=401).roots == []


def test_bracket_reports_nonfinite_points():
    br = bracket_roots(lambda x: 1.0 / (x - 0.5) if x != 0.5 else np.inf, 0.0, 1.0, n=4)
    assert br.exceptional == [0.5]


@given(st.lists(st.floats(0.2, 9.8), min_size=1, max_size=5, unique=True))
def test_bracket_finds_simple_roots(roots):
    roots = sorted(roots)
    if np.min(np.diff([0] + roots + [10])) < 0.05:
        return
    found = bracket_roots(lambda x: np.prod([x - r for r in roots]), 0.0, 10.0, n=1000).roots
    assert np.allclose(found, roots, atol=1e-9)


def test_tolerances_override():
    t = Tolerances().updated(opnorm=1e-4)
    assert t.opnorm == 1e-4 and t.solve == 1e-10
