"""Limiting operator on ``L2(G) + C^N`` and its embedding into the thin domain.

Domain elements are pairs ``(u, beta)`` with ``u`` continuous on the graph
and ``beta = kappa * u_V``; the operator acts as ``(-u'', -kappa^{-1} d_n u|_V)``
where ``d_n u|_v`` sums edge-inward derivatives at ``v``. Quadratic form:
``sum_e int |u'|^2`` (nonnegative), so the vertex condition on eigenfunctions
reads ``sum_e d_n u_e|_v = -z |Q_v^0| u_v``.

Edge solutions are written in the basis ``cos(k x)``, ``sin(k x)/k`` with
``k = sqrt(z)``; both are even in ``k`` (entire in ``z``), so no branch or
exceptional-energy issue arises in :func:`regular_matrix`. Edge data are
piecewise constant on a uniform partition of each edge, and the resolvent is
evaluated exactly for such data.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize_scalar

from .graph_model import MetricGraph, kappa as graph_kappa
from .numerics import DEFAULT_TOLERANCES, NumericalError, SpectrumHit, bracket_roots

logger = logging.getLogger(__name__)

_SERIES_TERMS = 24


class ExceptionalEnergy(ValueError):
    """``sin(sqrt(z) l_e) = 0`` for some edge: the vertex-value secular matrix has a pole."""


def trig_basis(z: complex, x):
    """Entire edge functions at points ``x``.

    Returns ``c = cos(kx)``, ``s = sin(kx)/k``, ``w = (1 - c)/z`` and
    ``w2 = (x - s)/z`` (so ``c' = -z s``, ``s' = c``, ``w' = s``, ``w2' = w``).
    """
    x = np.asarray(x, dtype=complex)
    z = complex(z)
    t = -z * x * x
    small = np.abs(t) < 0.5
    c = np.empty_like(x)
    s = np.empty_like(x)
    w = np.empty_like(x)
    w2 = np.empty_like(x)
    if small.any():
        ts, xs = t[small], x[small]
        term = np.ones_like(ts)
        sc = np.zeros_like(ts)
        ss = np.zeros_like(ts)
        sw = np.zeros_like(ts)
        sw2 = np.zeros_like(ts)
        # term_n = t^n; factorials fixed per n
        for n in range(_SERIES_TERMS):
            sc += term / math.factorial(2 * n)
            ss += term / math.factorial(2 * n + 1)
            sw += term / math.factorial(2 * n + 2)
            sw2 += term / math.factorial(2 * n + 3)
            term = term * ts
        c[small] = sc
        s[small] = xs * ss
        w[small] = xs ** 2 * sw
        w2[small] = xs ** 3 * sw2
    big = ~small
    if big.any():
        k = np.sqrt(z)
        xb = x[big]
        c[big] = np.cos(k * xb)
        s[big] = np.sin(k * xb) / k
        w[big] = (1.0 - c[big]) / z
        w2[big] = (xb - s[big]) / z
    return c, s, w, w2


@dataclass
class EffectiveOperator:
    graph: MetricGraph
    kappa: np.ndarray
    lengths: np.ndarray

    def __post_init__(self):
        self.kappa = np.asarray(self.kappa, dtype=float)
        self.lengths = np.asarray(self.lengths, dtype=float)
        if self.kappa.shape != (self.graph.N,) or (self.kappa < 0).any():
            raise ValueError("kappa must be a nonnegative N-vector")
        if self.lengths.shape != (len(self.graph.edges),) or (self.lengths <= 0).any():
            raise ValueError("edge lengths must be positive, one per edge")
        vid = {v.id: i for i, v in enumerate(self.graph.vertices)}
        self.tails = np.array([vid[e.tail] for e in self.graph.edges], dtype=int)
        self.heads = np.array([vid[e.head] for e in self.graph.edges], dtype=int)

    @property
    def N(self) -> int:
        return self.graph.N

    @property
    def n_edges(self) -> int:
        return len(self.graph.edges)

    @classmethod
    def for_mesh(cls, mesh) -> "EffectiveOperator":
        """Effective operator with the mesh's realized vertex areas and edge lengths."""
        return cls(mesh.graph, np.sqrt(mesh.realized_template_areas()), mesh.realized_lengths())


def build_effective(graph: MetricGraph) -> EffectiveOperator:
    return EffectiveOperator(graph, graph_kappa(graph), np.array([e.length for e in graph.edges]))


@dataclass
class EffectiveElement:
    """``(u, beta)`` with ``u`` piecewise constant on uniform cells of each edge."""

    edges: list
    beta: np.ndarray
    lengths: np.ndarray

    def widths(self):
        return [L / len(u) for L, u in zip(self.lengths, self.edges)]

    def inner(self, other: "EffectiveElement") -> complex:
        """``<self, other>``, linear in ``self``."""
        tot = sum(dx * np.vdot(b, a) for dx, a, b in zip(self.widths(), self.edges, other.edges))
        return complex(tot + np.vdot(other.beta, self.beta))

    def norm(self) -> float:
        return math.sqrt(max(self.inner(self).real, 0.0))

    def _zip(self, other, fn):
        return EffectiveElement([fn(a, b) for a, b in zip(self.edges, other.edges)],
                                fn(self.beta, other.beta), self.lengths)

    def __add__(self, other):
        return self._zip(other, np.add)

    def __sub__(self, other):
        return self._zip(other, np.subtract)

    def scaled(self, a) -> "EffectiveElement":
        return EffectiveElement([a * u for u in self.edges], a * self.beta, self.lengths)

    @classmethod
    def zeros(cls, op: EffectiveOperator, cells: Sequence[int]) -> "EffectiveElement":
        return cls([np.zeros(n, complex) for n in cells], np.zeros(op.N, complex), op.lengths.copy())

    @classmethod
    def random(cls, op: EffectiveOperator, cells: Sequence[int], rng) -> "EffectiveElement":
        def r(n):
            return rng.standard_normal(n) + 1j * rng.standard_normal(n)
        return cls([r(n) for n in cells], r(op.N), op.lengths.copy())


@dataclass
class SecularSystem:
    z: complex
    T: np.ndarray
    exceptional: list          # edge ids with sin(sqrt(z) l_e) ~ 0 (empty when T is valid)


def secular_matrix(op: EffectiveOperator, z: complex, *, guard: float = 1e-8) -> SecularSystem:
    """Vertex-value secular matrix ``T(z)``.

    ``T(z) u_V = 0`` iff the graph carries a nonzero solution of
    ``-u'' = z u`` with the vertex conditions. Raises
    :class:`ExceptionalEnergy` where an edge's Dirichlet problem is resonant.
    """
    z = complex(z)
    c, s, _, _ = trig_basis(z, op.lengths)
    bad = [e.id for e, cc, ss, L in zip(op.graph.edges, c, s, op.lengths)
           if abs(ss) < guard * max(L, abs(cc) * L)]
    if bad:
        raise ExceptionalEnergy(f"z={z} is an edge-Dirichlet energy for {bad}")
    T = np.zeros((op.N, op.N), dtype=complex)
    a, b = op.tails, op.heads
    np.add.at(T, (a, a), c / s)
    np.add.at(T, (b, b), c / s)
    np.add.at(T, (a, b), -1.0 / s)
    np.add.at(T, (b, a), -1.0 / s)
    T[np.diag_indices(op.N)] -= z * op.kappa ** 2
    return SecularSystem(z, T, [])


def regular_matrix(op: EffectiveOperator, z: complex) -> np.ndarray:
    """Square system in the unknowns ``(A_e, B_e, u_v)``; entire in ``z``.

    ``u_e(x) = A_e cos(kx) + B_e sin(kx)/k``; rows impose continuity at both
    ends of every edge and the vertex balance ``-sum d_n u - z kappa^2 u_v``.
    Its determinant vanishes exactly on the spectrum.
    """
    z = complex(z)
    E, N = op.n_edges, op.N
    c, s, _, _ = trig_basis(z, op.lengths)
    F = np.zeros((2 * E + N, 2 * E + N), dtype=complex)
    e = np.arange(E)
    F[e, e] = 1.0
    F[e, 2 * E + op.tails] -= 1.0
    F[E + e, e] = c
    F[E + e, E + e] = s
    F[E + e, 2 * E + op.heads] -= 1.0
    rows_t = 2 * E + op.tails
    rows_h = 2 * E + op.heads
    np.add.at(F, (rows_t, E + e), -1.0)              # inward derivative at x=0 is B
    np.add.at(F, (rows_h, e), -z * s)                # inward derivative at x=L is zAs - Bc
    np.add.at(F, (rows_h, E + e), c)
    F[2 * E + np.arange(N), 2 * E + np.arange(N)] -= z * op.kappa ** 2
    return F


def secular_determinant(op: EffectiveOperator, z: complex) -> complex:
    return complex(np.linalg.det(regular_matrix(op, z)))


@dataclass
class EigenRecord:
    value: float
    multiplicity: int
    residual: float          # smallest singular value of the regular matrix, relative


def _sv(op, z):
    return np.linalg.svd(regular_matrix(op, z), compute_uv=False)


def argument_count(op: EffectiveOperator, a: float, b: float, eta: Optional[float] = None,
                   pieces: int = 64) -> int:
    """Number of zeros of ``det F`` inside the rectangle ``[a, b] x [-eta, eta]``."""
    if eta is None:
        eta = 1.0 + 0.05 * (b - a)
    corners = [a - 1j * eta, b - 1j * eta, b + 1j * eta, a + 1j * eta, a - 1j * eta]
    total = 0.0
    for p, q in zip(corners[:-1], corners[1:]):
        ts = list(np.linspace(0.0, 1.0, pieces + 1))
        vals = [secular_determinant(op, p + t * (q - p)) for t in ts]
        i = 0
        while i < len(ts) - 1:
            d = np.angle(vals[i + 1] / vals[i])
            if abs(d) > np.pi / 4 and ts[i + 1] - ts[i] > 1e-9:
                tm = 0.5 * (ts[i] + ts[i + 1])
                ts.insert(i + 1, tm)
                vals.insert(i + 1, secular_determinant(op, p + tm * (q - p)))
                continue
            total += d
            i += 1
    return int(round(total / (2 * np.pi)))


def _find(op, lo, hi, n, tol):
    def det_real(x):
        return secular_determinant(op, x).real

    found = list(bracket_roots(det_real, lo, hi, n, tol).roots)
    # zeros without a sign change: local minima of the smallest singular value
    xs = np.linspace(lo, hi, n + 1)
    smin = np.array([(lambda sv: sv[-1] / sv[0])(_sv(op, x)) for x in xs])
    for i in range(1, n):
        if smin[i] <= smin[i - 1] and smin[i] <= smin[i + 1]:
            res = minimize_scalar(lambda x: (lambda sv: sv[-1] / sv[0])(_sv(op, x)),
                                  bounds=(xs[i - 1], xs[i + 1]), method="bounded",
                                  options={"xatol": tol})
            near = xs[i + 1] - xs[i - 1]
            if res.fun < 1e-7 and all(abs(res.x - r) > near for r in found):
                found.append(float(res.x))
    return sorted(found)


def _multiplicity(op, x):
    sv = _sv(op, x)
    return max(1, int(np.sum(sv < 1e-6 * sv[0]))), float(sv[-1] / sv[0])


def spectrum_details(op: EffectiveOperator, window, tol: float = 1e-10, n: Optional[int] = None) -> list:
    """Eigenvalues in ``window`` with multiplicities and determinant residuals."""
    a, b = map(float, window)
    if not b > a:
        raise ValueError("window must satisfy a < b")
    weyl = op.lengths.sum() * math.sqrt(max(b, 0.0) + 1.0) / math.pi + op.N + op.n_edges
    if n is None:
        n = int(max(400, 60 * weyl))
    pad = 1e-3 * (b - a) + 1e-3
    lo, hi = a - pad, b + pad
    for _ in range(4):
        roots = _find(op, lo, hi, n, tol)
        recs = [EigenRecord(r, *_multiplicity(op, r)) for r in roots]
        expected = argument_count(op, lo, hi)
        got = sum(r.multiplicity for r in recs)
        if got == expected:
            break
        logger.info("root count %d != argument count %d on %s; refining grid", got, expected, (lo, hi))
        n *= 2
    else:
        raise NumericalError(f"eigenvalue search inconsistent: {got} roots vs {expected} by argument count")
    out = []
    for r in recs:
        if a - tol <= r.value <= b + tol:
            out.append(EigenRecord(min(max(r.value, a), b) if abs(r.value - a) < tol or abs(r.value - b) < tol
                                   else r.value, r.multiplicity, r.residual))
    return out


def spectrum(op: EffectiveOperator, window, tol: float = 1e-10) -> list:
    """Eigenvalues in ``window`` (repeated by multiplicity), ascending."""
    return [r.value for r in spectrum_details(op, window, tol) for _ in range(r.multiplicity)]


def spectrum_csv(records, path=None) -> str:
    """CSV with columns ``index,eigenvalue,multiplicity,det_residual``; written to ``path`` if given."""
    lines = ["index,eigenvalue,multiplicity,det_residual"]
    lines += [f"{i},{r.value:.15e},{r.multiplicity},{r.residual:.3e}" for i, r in enumerate(records)]
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


@dataclass
class ResolventSolution:
    """Exact solution of ``(A_hom - z)(u, beta) = (f, g)`` for piecewise-constant ``f``."""

    op: EffectiveOperator
    z: complex
    f: list
    A: np.ndarray
    B: np.ndarray
    u_vertex: np.ndarray
    g: Optional[np.ndarray] = None     # vertex data

    def _prefix(self, e):
        f = self.f[e]
        L = self.op.lengths[e]
        dx = L / len(f)
        xj = np.arange(len(f)) * dx
        c, s, _, _ = trig_basis(self.z, xj)
        cd, sd, wd, _ = trig_basis(self.z, np.array([dx]))
        dS = s * (-self.z * wd[0]) + c * sd[0]          # s(x+dx) - s(x)
        dW = s * sd[0] + c * wd[0]                       # w(x+dx) - w(x)
        C = np.concatenate([[0], np.cumsum(f * dS)])     # int_0^x cos(kt) f
        S = np.concatenate([[0], np.cumsum(f * dW)])     # int_0^x s(t) f
        return dx, xj, C, S

    def values(self, e: int, x):
        """``u_e`` at points ``x`` of edge ``e``."""
        x = np.atleast_1d(np.asarray(x, float))
        dx, xj, C, S = self._prefix(e)
        j = np.clip((x / dx).astype(int), 0, len(self.f[e]) - 1)
        c, s, _, _ = trig_basis(self.z, x)
        _, _, wl, _ = trig_basis(self.z, x - xj[j])
        duhamel = s * C[j] - c * S[j] + self.f[e][j] * wl
        return self.A[e] * c + self.B[e] * s - duhamel

    def derivatives(self, e: int, x):
        x = np.atleast_1d(np.asarray(x, float))
        dx, xj, C, S = self._prefix(e)
        j = np.clip((x / dx).astype(int), 0, len(self.f[e]) - 1)
        c, s, _, _ = trig_basis(self.z, x)
        _, sl, _, _ = trig_basis(self.z, x - xj[j])
        dduh = c * C[j] + self.z * s * S[j] + self.f[e][j] * sl
        return -self.z * s * self.A[e] + self.B[e] * c - dduh

    def cell_averages(self, e: int) -> np.ndarray:
        dx, xj, C, S = self._prefix(e)
        c, s, _, _ = trig_basis(self.z, xj)
        _, sd, wd, w2d = trig_basis(self.z, np.array([dx]))
        avg_c = (s * (-self.z * wd[0]) + c * sd[0]) / dx
        avg_s = (s * sd[0] + c * wd[0]) / dx
        n = len(self.f[e])
        duh = C[:n] * avg_s - S[:n] * avg_c + self.f[e] * (w2d[0] / dx)
        return self.A[e] * avg_c + self.B[e] * avg_s - duh

    @property
    def beta(self) -> np.ndarray:
        return self.op.kappa * self.u_vertex

    def element(self) -> EffectiveElement:
        return EffectiveElement([self.cell_averages(e) for e in range(self.op.n_edges)],
                                self.beta, self.op.lengths.copy())


def resolvent_solve(op: EffectiveOperator, z: complex, rhs: EffectiveElement,
                    guard: float = 1e-12) -> ResolventSolution:
    z = complex(z)
    E, N = op.n_edges, op.N
    F = regular_matrix(op, z)
    sv = np.linalg.svd(F, compute_uv=False)
    if sv[-1] < guard * sv[0]:
        raise SpectrumHit(f"z={z} is (numerically) an eigenvalue of the effective operator")
    r = np.zeros(2 * E + N, dtype=complex)
    fs = [np.asarray(f, dtype=complex) for f in rhs.edges]
    sol = ResolventSolution(op, z, fs, np.zeros(E, complex), np.zeros(E, complex), np.zeros(N, complex),
                           np.asarray(rhs.beta, dtype=complex))
    cL, sL, _, _ = trig_basis(z, op.lengths)
    for e in range(E):
        _, _, C, S = sol._prefix(e)
        D = sL[e] * C[-1] - cL[e] * S[-1]
        Dp = cL[e] * C[-1] + z * sL[e] * S[-1]
        r[E + e] += D
        r[2 * E + op.heads[e]] += Dp
    r[2 * E:] += op.kappa * np.asarray(rhs.beta, dtype=complex)
    x = np.linalg.solve(F, r)
    sol.A, sol.B, sol.u_vertex = x[:E], x[E:2 * E], x[2 * E:]
    return sol


def resolvent_apply(op: EffectiveOperator, z: complex, rhs: EffectiveElement) -> EffectiveElement:
    """``(A_hom - z)^{-1}`` applied to piecewise-constant data; returns cell averages."""
    return resolvent_solve(op, z, rhs).element()


def _quadrature(sol: ResolventSolution, test: ResolventSolution, nodes: int):
    """Per-edge Gauss-Legendre samples on the cells of ``sol`` (shared with ``test``)."""
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    for e in range(sol.op.n_edges):
        n = len(sol.f[e])
        if len(test.f[e]) != n:
            raise ValueError("solutions must use the same cell partition")
        dx = sol.op.lengths[e] / n
        x = (np.arange(n)[:, None] * dx + 0.5 * dx * (gx[None, :] + 1.0)).ravel()
        yield e, x, np.tile(0.5 * dx * gw, n)


def solution_inner(sol: ResolventSolution, test: ResolventSolution, nodes: int = 10) -> complex:
    """``<U, V>`` of two exact resolvent outputs (edge integrals plus ``beta`` part).

    Both functions are smooth inside every data cell, so Gauss-Legendre on
    the cells is exact to rounding.
    """
    tot = sum(np.sum(w * sol.values(e, x) * test.values(e, x).conj())
              for e, x, w in _quadrature(sol, test, nodes))
    return complex(tot + np.vdot(test.beta, sol.beta))


def weak_residual(sol: ResolventSolution, test: ResolventSolution, nodes: int = 10) -> float:
    """Relative defect of ``a(U, V) - z <U, V> = <X, V>`` for ``U = sol``, ``V = test``.

    ``a`` is the form ``sum_e int u' conj(v')`` and ``X`` the data that
    produced ``sol``; the identity tests the edge equation, continuity and
    the vertex condition at once.
    """
    form = data = 0.0
    scale = 0.0
    for e, x, w in _quadrature(sol, test, nodes):
        v = test.values(e, x)
        t_form = np.sum(w * sol.derivatives(e, x) * test.derivatives(e, x).conj())
        t_data = np.sum(w * np.repeat(sol.f[e], nodes) * v.conj())
        form, data = form + t_form, data + t_data
        scale += abs(t_form) + abs(t_data)
    mass = solution_inner(sol, test, nodes)
    g = np.asarray(sol.g, dtype=complex)
    data += np.vdot(test.beta, g)
    scale += abs(sol.z * mass) + abs(np.vdot(test.beta, g))
    return float(abs(form - sol.z * mass - data) / max(scale, 1e-300))


def resolvent_identity_residual(op: EffectiveOperator, z: complex, zeta: complex,
                                x: EffectiveElement, y: EffectiveElement) -> float:
    """Relative defect of ``<(R(z) - R(zeta)) x, y> = (z - zeta) <R(zeta) x, R(conj z) y>``.

    This is the resolvent identity ``R(z) - R(zeta) = (z - zeta) R(z) R(zeta)``
    tested against ``y``; the right side needs no re-projection of ``R(zeta) x``.
    """
    lhs = resolvent_apply(op, z, x).inner(y) - resolvent_apply(op, zeta, x).inner(y)
    rhs = (complex(z) - complex(zeta)) * solution_inner(resolvent_solve(op, zeta, x),
                                                        resolvent_solve(op, np.conj(complex(z)), y))
    return float(abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300))


def oracle_system(op: EffectiveOperator, m: int):
    """Finite-volume discretization: stiffness, lumped mass and node layout.

    Nodes are the vertices followed by the interior points of each edge
    (``round(m * l_e)`` intervals). Vertex mass is ``kappa_v^2`` plus half of
    every adjacent interval; edge-node mass is the interval length.
    """
    if m < 8:
        raise ValueError("need m >= 8 cells per unit length")
    N = op.N
    blocks, offset = [], N
    rows, cols, vals = [], [], []
    mass = [op.kappa ** 2]
    for e in range(op.n_edges):
        n = max(2, int(round(m * op.lengths[e])))
        he = op.lengths[e] / n
        nodes = [op.tails[e]] + list(range(offset, offset + n - 1)) + [op.heads[e]]
        for p, q in zip(nodes[:-1], nodes[1:]):
            rows += [p, q, p, q]
            cols += [p, q, q, p]
            vals += [1 / he, 1 / he, -1 / he, -1 / he]
        mass.append(np.full(n - 1, he))
        blocks.append((offset, n, he))
        offset += n - 1
    K = np.zeros((offset, offset))
    np.add.at(K, (rows, cols), vals)
    M = np.concatenate(mass)
    for e, (_, _, he) in enumerate(blocks):
        M[op.tails[e]] += he / 2
        M[op.heads[e]] += he / 2
    return K, M, blocks


def dense_oracle(op: EffectiveOperator, m: int) -> np.ndarray:
    """Symmetric matrix ``M^{-1/2} K M^{-1/2}``; its eigenvalues approximate the spectrum to O(h^2)."""
    K, M, _ = oracle_system(op, m)
    d = 1.0 / np.sqrt(M)
    S = d[:, None] * K * d[None, :]
    return 0.5 * (S + S.T)


def oracle_eigenvalues(op: EffectiveOperator, m: int, count: Optional[int] = None,
                       richardson: bool = True) -> np.ndarray:
    """Oracle eigenvalues, Richardson-extrapolated from ``m`` and ``2m`` unless disabled."""
    lo = np.linalg.eigvalsh(dense_oracle(op, m))
    if not richardson:
        return lo[:count]
    hi = np.linalg.eigvalsh(dense_oracle(op, 2 * m))
    k = min(len(lo), len(hi)) if count is None else count
    return (4 * hi[:k] - lo[:k]) / 3


def oracle_resolvent(op: EffectiveOperator, m: int, z: complex, f_funcs, g):
    """Solve the oracle system at ``z`` with edge data ``f_funcs[e](x)`` and vertex data ``g``.

    Returns ``(vertex_values, [(x_nodes, u_nodes) per edge])``.
    """
    K, M, blocks = oracle_system(op, m)
    rhs = np.zeros(len(M), dtype=complex)
    rhs[:op.N] += op.kappa * np.asarray(g, dtype=complex)
    for e, (off, n, he) in enumerate(blocks):
        x = np.arange(1, n) * he
        rhs[off:off + n - 1] += he * f_funcs[e](x)
        rhs[op.tails[e]] += he / 2 * f_funcs[e](np.array([0.0]))[0]
        rhs[op.heads[e]] += he / 2 * f_funcs[e](np.array([op.lengths[e]]))[0]
    u = np.linalg.solve(K - z * np.diag(M), rhs)
    out = []
    for e, (off, n, he) in enumerate(blocks):
        x = np.arange(0, n + 1) * he
        vals = np.concatenate([[u[op.tails[e]]], u[off:off + n - 1], [u[op.heads[e]]]])
        out.append((x, vals))
    return u[:op.N], out


# --- embedding into the thin domain -------------------------------------------------

def _check_pair(mesh, x_lengths=None):
    ids = [c.id for c in mesh.edges]
    if ids != [e.id for e in mesh.graph.edges]:
        raise ValueError("mesh and effective operator refer to different graphs")


def theta_embed(mesh, x: EffectiveElement) -> np.ndarray:
    """Grid function: ``u_e / sqrt(eps)`` across each edge, normalized vertex constants on ``Q_v``."""
    _check_pair(mesh)
    if len(x.edges) != len(mesh.edges) or len(x.beta) != len(mesh.vertices):
        raise ValueError("element does not match the mesh graph")
    out = np.zeros(mesh.n_cells, dtype=complex)
    eps = mesh.realized_epsilon
    for c, u in zip(mesh.edges, x.edges):
        if len(u) != c.n_along:
            raise ValueError(f"edge '{c.id}' needs {c.n_along} cell values, got {len(u)}")
        out[c.cells] = np.repeat(np.asarray(u) / math.sqrt(eps), c.n_across)
    for c, b in zip(mesh.vertices, x.beta):
        out[c.cells] = b / math.sqrt(c.n_cells * mesh.h ** 2)
    return out


def theta_adjoint(mesh, g) -> EffectiveElement:
    """Exact adjoint of :func:`theta_embed` in the ``h^2``-weighted grid inner product."""
    _check_pair(mesh)
    g = np.asarray(g)
    h, eps = mesh.h, mesh.realized_epsilon
    edges = [h / math.sqrt(eps) * g[c.cells].reshape(c.n_along, c.n_across).sum(axis=1) for c in mesh.edges]
    beta = np.array([h / math.sqrt(c.n_cells) * g[c.cells].sum() for c in mesh.vertices], dtype=complex)
    return EffectiveElement(edges, beta, mesh.realized_lengths())
