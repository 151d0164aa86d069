"""Shared numerical kernel: shifted sparse solves, symmetric eigensolvers,
matrix-free operator norms and 1D root bracketing."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

logger = logging.getLogger(__name__)

DEFAULT_SEED = 20240611


class NumericalError(RuntimeError):
    """A solver or eigensolver failed to deliver the requested accuracy."""


class SpectrumHit(NumericalError):
    """The shift lies in (or numerically at) the discrete spectrum."""


@dataclass(frozen=True)
class Tolerances:
    solve: float = 1e-10
    eigen: float = 1e-8
    opnorm: float = 1e-3
    root: float = 1e-10
    admissibility: float = 1e-6

    def updated(self, **kw) -> "Tolerances":
        return replace(self, **{k: float(v) for k, v in kw.items()})


DEFAULT_TOLERANCES = Tolerances()


def _as_csc(A):
    if hasattr(A, "matrix"):
        A = A.matrix
    return sp.csc_matrix(A)


class ShiftedSolver:
    """Sparse LU of ``A - z B`` with one step of iterative refinement.

    ``last_residual`` is the normwise backward error
    ``||b - Ax|| / (||A|| ||x|| + ||b||)`` of the latest solve.

    ``B`` is a positive diagonal (given as a vector or scalar), identity
    when omitted. The factorization is read-only after construction, so
    one solver may serve many right-hand sides.
    """

    def __init__(self, A, z: complex = 0.0, mass=None, tol: float = DEFAULT_TOLERANCES.solve):
        A = _as_csc(A)
        n = A.shape[0]
        if mass is None:
            mass = np.ones(n)
        mass = np.broadcast_to(np.asarray(mass, dtype=float), (n,))
        z = complex(z)
        self.z = z
        self.tol = tol
        self.dtype = np.float64 if z.imag == 0.0 else np.complex128
        shift = z.real if self.dtype is np.float64 else z
        self.matrix = (A - shift * sp.diags(mass)).astype(self.dtype).tocsc()
        self.shape = self.matrix.shape
        self.last_residual = 0.0
        try:
            self._lu = spla.splu(self.matrix, permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:  # exactly singular pivot
            raise SpectrumHit(f"z={z} in discrete spectrum ({exc})") from exc
        self._norm = float(spla.norm(self.matrix, 1))
        diag_u = np.abs(self._lu.U.diagonal())
        scale = max(np.abs(self.matrix).max(), 1e-300)
        if diag_u.min() <= 1e-13 * scale:
            raise SpectrumHit(
                f"z={z} in discrete spectrum (pivot {diag_u.min():.3e}, scale {scale:.3e})"
            )

    def solve(self, b):
        b = np.asarray(b)
        dtype = np.result_type(self.dtype, b.dtype)
        x = self._lu.solve(b.astype(dtype, copy=False)) if dtype == self.dtype else self._solve_mixed(b)
        r = b - self.matrix @ x
        x = x + (self._lu.solve(r.astype(self.dtype)) if dtype == self.dtype else self._solve_mixed(r))
        r = b - self.matrix @ x
        # normwise backward error; the plain relative residual grows with the condition number
        denom = self._norm * np.linalg.norm(x) + np.linalg.norm(b)
        self.last_residual = float(np.linalg.norm(r) / denom) if denom > 0 else 0.0
        if self.last_residual > self.tol:
            raise NumericalError(
                f"solve residual {self.last_residual:.3e} above {self.tol:.1e} at z={self.z}"
            )
        return x

    def _solve_mixed(self, b):
        # real factorization, complex data
        return self._lu.solve(np.ascontiguousarray(b.real)) + 1j * self._lu.solve(
            np.ascontiguousarray(b.imag)
        )


def factorize(A, z: complex = 0.0, mass=None, tol: Optional[float] = None) -> ShiftedSolver:
    """Factorize ``A - z*mass`` for repeated solves.

    Raises
    ------
    SpectrumHit
        If the shifted matrix is numerically singular.
    """
    return ShiftedSolver(A, z, mass=mass, tol=DEFAULT_TOLERANCES.solve if tol is None else tol)


def sym_eigs_smallest(A, k: int, tol: float = DEFAULT_TOLERANCES.eigen, *, lower_bound: float = 0.0,
                      seed: int = DEFAULT_SEED, dense_below: int = 400):
    """The ``k`` algebraically smallest eigenpairs of a symmetric matrix.

    Uses shift-invert Lanczos (ARPACK) with the shift placed just below
    ``lower_bound``; small problems go to a dense solver. The start vector
    is drawn from a fixed seed so results are reproducible.

    Returns
    -------
    vals : ndarray, shape (k,)
    vecs : ndarray, shape (n, k)
    """
    M = A.matrix if hasattr(A, "matrix") else A
    n = M.shape[0]
    if not 0 < k < n:
        raise ValueError(f"need 0 < k < n, got k={k}, n={n}")
    if n <= dense_below:
        dense = M.toarray() if sp.issparse(M) else np.asarray(M)
        vals, vecs = sla.eigh(dense, subset_by_index=[0, k - 1])
    else:
        M = sp.csc_matrix(M)
        scale = float(np.abs(M.diagonal()).mean()) or 1.0
        sigma = lower_bound - 1e-2 * scale
        v0 = np.random.default_rng(seed).standard_normal(n)
        try:
            vals, vecs = spla.eigsh(M, k=k, sigma=sigma, which="LM", v0=v0,
                                    tol=tol * 1e-2, maxiter=20 * n)
        except spla.ArpackNoConvergence as exc:
            raise NumericalError(f"eigsh did not converge: {exc}") from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    norm_a = spla.norm(M, 1) if sp.issparse(M) else np.linalg.norm(M, 1)
    res = np.linalg.norm(M @ vecs - vecs * vals, axis=0)
    if res.max() > tol * max(norm_a, 1.0):
        raise NumericalError(f"eigenpair residual {res.max():.3e} exceeds {tol:.1e}*||A||")
    return vals, vecs


@dataclass
class OpAction:
    """Matrix-free linear map with its adjoint, acting on ``dim``-vectors."""

    dim: int
    matvec: Callable[[np.ndarray], np.ndarray]
    rmatvec: Callable[[np.ndarray], np.ndarray]
    dtype: type = np.complex128

    @classmethod
    def from_matrix(cls, T) -> "OpAction":
        T = np.asarray(T) if not sp.issparse(T) else T
        if T.shape[0] != T.shape[1]:
            raise ValueError("square operators only")
        TH = T.conj().T
        return cls(T.shape[1], lambda x: T @ x, lambda y: TH @ y, np.result_type(T.dtype, np.complex128))

    def adjoint_defect(self, probes: int = 3, seed: int = DEFAULT_SEED) -> float:
        """Relative mismatch of <Tx, y> and <x, T*y> on random probes."""
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(probes):
            x = rng.standard_normal(self.dim) + 1j * rng.standard_normal(self.dim)
            y = rng.standard_normal(self.dim) + 1j * rng.standard_normal(self.dim)
            Tx, Ty = self.matvec(x), self.rmatvec(y)
            lhs, rhs = np.vdot(y, Tx), np.vdot(Ty, x)
            scale = np.linalg.norm(Tx) * np.linalg.norm(y) + np.linalg.norm(Ty) * np.linalg.norm(x)
            worst = max(worst, abs(lhs - rhs) / scale if scale else 0.0)
        return worst


class NormEstimate(NamedTuple):
    value: float
    iterations: int
    converged: bool

    def __float__(self):
        return self.value


def opnorm_power(T: OpAction, tol: float = DEFAULT_TOLERANCES.opnorm, *, maxiter: int = 500,
                 seed: int = DEFAULT_SEED) -> NormEstimate:
    """Largest singular value of ``T`` by power iteration on ``T*T``.

    Stops once the estimate changes by less than ``tol/10`` relative
    between sweeps, so the reported value is accurate to about ``tol``
    unless the top of the spectrum is nearly degenerate.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(T.dim)
    if np.issubdtype(np.dtype(T.dtype), np.complexfloating):
        x = x + 1j * rng.standard_normal(T.dim)
    x /= np.linalg.norm(x)
    sigma = 0.0
    for it in range(1, maxiter + 1):
        y = T.matvec(x)
        new = float(np.linalg.norm(y))
        if new == 0.0:
            return NormEstimate(0.0, it, True)
        x = T.rmatvec(y)
        x /= np.linalg.norm(x)
        if abs(new - sigma) <= 0.1 * tol * new:
            return NormEstimate(new, it, True)
        sigma = new
    logger.warning("opnorm_power hit the iteration cap (%d); estimate %.6e", maxiter, sigma)
    return NormEstimate(sigma, maxiter, False)


class Brackets(NamedTuple):
    roots: list
    exceptional: list


def bracket_roots(f: Callable[[float], float], a: float, b: float, n: int = 400,
                  tol: float = DEFAULT_TOLERANCES.root) -> Brackets:
    """Sign-change roots of ``f`` on ``[a, b]`` refined by Brent's method.

    Grid points where ``f`` is not finite are returned as exceptional and
    never used as bracket ends. Roots of even multiplicity produce no sign
    change and are missed; callers needing them must cross-check.
    """
    xs = np.linspace(a, b, n + 1)
    fs = np.array([f(x) for x in xs], dtype=float)
    finite = np.isfinite(fs)
    exceptional = [float(x) for x in xs[~finite]]
    roots = []
    for i in range(n):
        if not (finite[i] and finite[i + 1]):
            continue
        fa, fb = fs[i], fs[i + 1]
        if fa == 0.0:
            roots.append(float(xs[i]))
        elif fa * fb < 0.0:
            roots.append(float(brentq(f, xs[i], xs[i + 1], xtol=tol, rtol=4 * np.finfo(float).eps)))
    if finite[-1] and fs[-1] == 0.0:
        roots.append(float(xs[-1]))
    return Brackets(roots, exceptional)
