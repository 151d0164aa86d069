"""Boundary-triple calculus on the plate trace space.

Trace dofs sit on plate faces; a face is joined to its edge cell and its
vertex cell by half-cell links (stiffness ``2`` each, unit-weight scaling).
Eliminating the face values reproduces the five-point Neumann operator
exactly, while fixing them to zero gives the decoupled operator, so the
discrete Krein formula holds to rounding.

Sign conventions (verified by the Herglotz test, not assumed):

* ``C_s(z) = D_s - B_s^T (K_s - z h^2)^{-1} B_s`` is the classical DtN Schur
  complement of side ``s`` in unit scaling;
* the M-function is ``M_s(z) = -C_s(z) / h`` (negative classical DtN, weight
  ``h`` on the trace space), so ``Im M(z) / Im z >= 0``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .numerics import DEFAULT_TOLERANCES, NumericalError, SpectrumHit, factorize
from .thin_mesh import ThinDomainMesh, assemble_neumann, plate_coupling

SIDES = ("E", "V", "full")


@dataclass
class BoundaryMap:
    """Dense operator on the plate trace space (``array`` acts on face coefficients)."""

    array: np.ndarray
    z: object = "static"
    side: str = "full"
    faces: Optional[np.ndarray] = None       # trace dof numbers labelling rows/cols

    @property
    def shape(self):
        return self.array.shape

    def __matmul__(self, other):
        if isinstance(other, BoundaryMap):
            return BoundaryMap(self.array @ other.array, self.z, self.side, self.faces)
        return self.array @ other

    def adjoint(self) -> "BoundaryMap":
        z = self.z if isinstance(self.z, str) else np.conj(self.z)
        return BoundaryMap(self.array.conj().T, z, self.side, self.faces)

    def symmetry_defect(self) -> float:
        a = self.array
        return float(np.linalg.norm(a - a.T) / max(np.linalg.norm(a), 1e-300))

    def to_csv(self, path=None) -> str:
        """Row-major dump; header carries ``z``, side and the dof ordering."""
        faces = self.faces if self.faces is not None else np.arange(self.shape[1])
        buf = io.StringIO()
        buf.write(f"# z={self.z} side={self.side}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row"] + [f"dof{int(f)}" for f in faces])
        cplx = np.iscomplexobj(self.array)
        for f, row in zip(faces, self.array):
            w.writerow([int(f)] + [repr(complex(x)) if cplx else repr(float(x)) for x in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text


class BoundaryCalculus:
    """Discrete lifts, solution operators and M-functions for one mesh.

    Factorizations are cached per ``(side, z)`` and reused across data.
    """

    def __init__(self, mesh: ThinDomainMesh, tol: float = DEFAULT_TOLERANCES.solve):
        self.mesh = mesh
        self.h = mesh.h
        self.tol = tol
        K0, B = plate_coupling(mesh)
        self.K0 = K0.tocsc()
        self.B = B.tocsc()
        self.cells = {"E": np.flatnonzero(~mesh.is_vertex_cell),
                      "V": np.flatnonzero(mesh.is_vertex_cell),
                      "full": np.arange(mesh.n_cells)}
        self.D = {"E": 2.0, "V": 2.0, "full": 4.0}
        self._K = {s: self.K0[c][:, c].tocsc() for s, c in self.cells.items()}
        self._B = {s: self.B[c].toarray() for s, c in self.cells.items()}
        self._solvers = {}
        self._neumann = None

    # -- factorizations ---------------------------------------------------------------
    def solver(self, side: str, z: complex):
        key = (side, complex(z))
        if key not in self._solvers:
            self._solvers[key] = factorize(self._K[side], z, mass=self.h ** 2, tol=self.tol)
        return self._solvers[key]

    def neumann_solver(self, z: complex):
        """Factorization of the coupled operator ``A_eps - z`` (unit scaling)."""
        key = ("neumann", complex(z))
        if key not in self._solvers:
            if self._neumann is None:
                self._neumann = assemble_neumann(self.mesh)
            K = self._neumann.matrix * self.h ** 2
            self._solvers[key] = factorize(K, z, mass=self.h ** 2, tol=self.tol)
        return self._solvers[key]

    def check_admissible(self, z: complex, side: str = "full", dist: float = DEFAULT_TOLERANCES.admissibility):
        """Reject ``z`` closer than ``dist`` to the decoupled spectrum."""
        z = complex(z)
        if abs(z.imag) >= dist:
            return
        from .numerics import sym_eigs_smallest  # local: only needed for real shifts
        import scipy.sparse.linalg as spla
        K = self._K[side] / self.h ** 2
        try:
            vals = spla.eigsh(K, k=1, sigma=z.real, which="LM", return_eigenvectors=False,
                              v0=np.ones(K.shape[0]))
        except RuntimeError as exc:
            raise SpectrumHit(f"z={z} in decoupled spectrum ({exc})") from exc
        if np.min(np.abs(vals - z.real)) < dist:
            raise SpectrumHit(f"z={z} within {dist} of the decoupled spectrum")

    # -- operators ---------------------------------------------------------------------
    def _side_solve(self, side, z, rhs):
        return self.solver(side, z).solve(rhs)

    def solution(self, z: complex, phi, side: str = "full") -> np.ndarray:
        """``S_z phi``: solves ``-Lap u - z u = 0`` on the chosen side with trace ``phi``."""
        phi = np.asarray(phi)
        dtype = np.result_type(phi.dtype, complex if complex(z).imag else float)
        out = np.zeros((self.mesh.n_cells,) + phi.shape[1:], dtype=dtype)
        c = self.cells[side]
        out[c] = -self._side_solve(side, z, self._B[side] @ phi)
        return out

    def lift(self, phi, side: str = "full") -> np.ndarray:
        return self.solution(0.0, phi, side)

    def solution_adjoint(self, z: complex, f) -> np.ndarray:
        """``S_z^* f`` (weighted adjoint), computed through ``K0 - conj(z) h^2``."""
        f = np.asarray(f)
        y = self._side_solve("full", np.conj(complex(z)), f)
        return -self.h * (self._B["full"].T @ y)

    def schur(self, z: complex, side: str = "full") -> np.ndarray:
        Bs = self._B[side]
        X = self._side_solve(side, z, Bs)
        return self.D[side] * np.eye(self.mesh.n_trace) - Bs.T @ X

    def m_function(self, z: complex, side: str = "full") -> BoundaryMap:
        z = complex(z)
        zz = "static" if z == 0 else z
        C = self.schur(0.0 if z == 0 else z, side)
        return BoundaryMap(-C / self.h, zz, side, np.arange(self.mesh.n_trace))

    def dtn(self, side: str = "full") -> BoundaryMap:
        return self.m_function(0.0, side)

    def decoupled_resolvent(self, z: complex, f) -> np.ndarray:
        return self._side_solve("full", z, self.h ** 2 * np.asarray(f))

    def neumann_resolvent(self, z: complex, f) -> np.ndarray:
        return self.neumann_solver(z).solve(self.h ** 2 * np.asarray(f))

    def vertex_dtn(self, v: str) -> BoundaryMap:
        """Block of the vertex-side DtN map on the plates of ``v``."""
        faces = self.mesh.vertex_faces(v)
        cells = self.mesh.vertex_component(v).cells
        K = self.K0[cells][:, cells]
        Bv = self.B[cells][:, faces].toarray()
        X = factorize(K, 0.0, tol=self.tol).solve(Bv)
        C = 2.0 * np.eye(len(faces)) - Bv.T @ X
        return BoundaryMap(-C / self.h, "static", "V", faces)


def calculus(mesh_or_calc) -> BoundaryCalculus:
    """The (cached) :class:`BoundaryCalculus` of a mesh."""
    if isinstance(mesh_or_calc, BoundaryCalculus):
        return mesh_or_calc
    calc = getattr(mesh_or_calc, "_calculus", None)
    if calc is None:
        calc = BoundaryCalculus(mesh_or_calc)
        mesh_or_calc._calculus = calc
    return calc


def harmonic_lift(mesh, side: str, phi) -> np.ndarray:
    return calculus(mesh).lift(phi, side)


def solution_operator(mesh, side: str, z: complex, phi) -> np.ndarray:
    calc = calculus(mesh)
    calc.check_admissible(z, side)
    return calc.solution(z, phi, side)


def dtn(mesh, side: str) -> BoundaryMap:
    return calculus(mesh).dtn(side)


def m_function(mesh, side: str, z: complex) -> BoundaryMap:
    calc = calculus(mesh)
    if complex(z) != 0:
        calc.check_admissible(z, side)
    return calc.m_function(z, side)


def vertex_projection(mesh: ThinDomainMesh) -> BoundaryMap:
    """Orthogonal projection onto the vertex-wise constants ``psi_v`` (rank ``N``)."""
    P = np.zeros((mesh.n_trace, mesh.n_trace))
    for v in mesh.graph.vertices:
        f = mesh.vertex_faces(v.id)
        P[np.ix_(f, f)] = 1.0 / len(f)
    return BoundaryMap(P, "static", "full", np.arange(mesh.n_trace))


def vertex_basis(mesh: ThinDomainMesh) -> np.ndarray:
    """Columns ``psi_v`` as Euclidean-orthonormal coefficient vectors."""
    U = np.zeros((mesh.n_trace, mesh.graph.N))
    for k, v in enumerate(mesh.graph.vertices):
        f = mesh.vertex_faces(v.id)
        U[f, k] = 1.0 / np.sqrt(len(f))
    return U


def _split_basis(P: np.ndarray):
    vals, vecs = np.linalg.eigh(0.5 * (P + P.conj().T))
    rank = int(round(np.trace(P).real))
    order = np.argsort(-vals)
    return vecs[:, order[:rank]], vecs[:, order[rank:]]


@dataclass
class BlockSplit:
    A: np.ndarray
    B: np.ndarray
    E: np.ndarray
    D: np.ndarray
    U: np.ndarray       # basis of P H
    V: np.ndarray       # basis of P_perp H


def block_split(M, P) -> BlockSplit:
    """Blocks of ``M`` relative to ``H = P H + P_perp H``."""
    M = M.array if isinstance(M, BoundaryMap) else np.asarray(M)
    P = P.array if isinstance(P, BoundaryMap) else np.asarray(P)
    U, V = _split_basis(P)
    UH, VH = U.conj().T, V.conj().T
    return BlockSplit(UH @ M @ U, UH @ M @ V, VH @ M @ U, VH @ M @ V, U, V)


def _checked_inverse(X, name, scale, rcond=1e-13):
    sv = np.linalg.svd(X, compute_uv=False)
    if sv.size and sv[-1] <= rcond * scale:
        raise NumericalError(f"{name} block is singular (smallest singular value {sv[-1]:.3e})")
    return np.linalg.inv(X)


def schur_frobenius_invert(M, P) -> BoundaryMap:
    """Invert ``M`` blockwise with the Schur complement ``D - E A^{-1} B``."""
    z = M.z if isinstance(M, BoundaryMap) else "static"
    s = block_split(M, P)
    scale = np.abs(s.A).max() + np.abs(s.D).max() + np.abs(s.B).max()
    Ainv = _checked_inverse(s.A, "A", scale)
    AinvB = Ainv @ s.B
    EAinv = s.E @ Ainv
    Sinv = _checked_inverse(s.D - s.E @ AinvB, "Schur complement", scale)
    blocks = np.block([[Ainv + AinvB @ Sinv @ EAinv, -AinvB @ Sinv],
                       [-Sinv @ EAinv, Sinv]])
    W = np.hstack([s.U, s.V])
    return BoundaryMap(W @ blocks @ W.conj().T, z, "full")


def perp_block_inverse_norm(M, P) -> float:
    """``||(P_perp M P_perp)^{-1}||`` with the block taken on ``P_perp H``."""
    D = block_split(M, P).D
    return float(1.0 / np.linalg.svd(D, compute_uv=False)[-1])


def krein_Q(M, beta0, beta1) -> np.ndarray:
    """``Q = -(beta0 + beta1 M)^{-1} beta1``."""
    M = M.array if isinstance(M, BoundaryMap) else M
    b0 = beta0.array if isinstance(beta0, BoundaryMap) else np.asarray(beta0)
    b1 = beta1.array if isinstance(beta1, BoundaryMap) else np.asarray(beta1)
    G = b0 + b1 @ M
    sv = np.linalg.svd(G, compute_uv=False)
    if sv[-1] <= 1e-13 * sv[0]:
        raise NumericalError(f"beta0 + beta1 M(z) is not invertible (sigma_min {sv[-1]:.3e})")
    return -np.linalg.solve(G, b1)


def krein_resolvent(mesh, z: complex, beta0, beta1, f, M: Optional[BoundaryMap] = None) -> np.ndarray:
    """``(A0 - z)^{-1} f + S_z Q(z) S_{conj z}^* f``.

    With ``beta0 = 0, beta1 = I`` this is the Neumann resolvent ``(A_eps - z)^{-1} f``.
    ``f`` may be a vector or a matrix of column vectors.
    """
    calc = calculus(mesh)
    z = complex(z)
    calc.check_admissible(z)
    if M is None:
        M = calc.m_function(z)
    Q = krein_Q(M, beta0, beta1)
    f = np.asarray(f, dtype=complex)
    u0 = calc.decoupled_resolvent(z, f)
    # S_{conj z}^* f = -(1/h) B^T (K0 - z h^2)^{-1} h^2 f
    g = -(calc._B["full"].T @ u0) / calc.h
    return u0 + calc.solution(z, Q @ g)


def steklov_spectrum(mesh, v: str, k: int, vectors: bool = False):
    """``k`` eigenvalues of the vertex DtN block of ``v`` smallest in modulus, ascending in ``|.|``."""
    L = calculus(mesh).vertex_dtn(v)
    n = L.shape[0]
    if not 0 < k <= n:
        raise ValueError(f"k must be in 1..{n}")
    vals, vecs = np.linalg.eigh(0.5 * (L.array + L.array.T))
    order = np.argsort(np.abs(vals), kind="stable")[:k]
    if vectors:
        return vals[order], vecs[:, order]
    return vals[order]
