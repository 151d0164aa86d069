"""Cut the thin domain along the vertex/edge interfaces and glue it back.

The interface faces carry a trace space. From the decoupled (Dirichlet on
the cut) operator we get solution operators S_z and the matrix function
M(z); the Neumann resolvent of the whole domain is then recovered exactly by
the Krein formula with beta0 = 0, beta1 = I.
"""

import numpy as np

from thingraph import boundary as bd
from thingraph.graph_model import corpus_graph
from thingraph.thin_mesh import assemble_neumann, build_mesh

mesh = build_mesh(corpus_graph("star3"), 1 / 16, 4)
calc = bd.calculus(mesh)
print(f"{mesh.n_cells} cells, {mesh.n_trace} interface faces")

z = 2 + 1j
M = calc.m_function(z)
scale = np.abs(M.array).max()
print("M(0) equals the static Dirichlet-to-Neumann map:",
      np.array_equal(calc.m_function(0).array, calc.dtn().array))
print(f"M(conj z) - M(z)^*      : {np.abs(calc.m_function(np.conj(z)).array - M.array.conj().T).max() / scale:.1e}")
H = (M.array - M.array.conj().T) / (2j * z.imag)
print(f"Im M(z) / Im z, min eig : {np.linalg.eigvalsh(H).min() / scale:+.2e}  (nonnegative up to rounding)")
parts = calc.m_function(z, "E").array + calc.m_function(z, "V").array
print(f"M = M_edges + M_vertices: {np.abs(M.array - parts).max() / scale:.1e}")

rng = np.random.default_rng(1)
f = rng.standard_normal(mesh.n_cells)
I = np.eye(mesh.n_trace)
glued = bd.krein_resolvent(mesh, z, 0 * I, I, f)
direct = np.linalg.solve(assemble_neumann(mesh).toarray() - z * np.eye(mesh.n_cells), f)
print(f"Krein formula vs direct Neumann solve: {np.linalg.norm(glued - direct) / np.linalg.norm(direct):.1e}")
