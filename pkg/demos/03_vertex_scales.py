"""How the vertex pieces scale as the domain thins.

On each vertex polygon: the Steklov problem has a zero eigenvalue with a
plate-wise constant eigenvector and a gap of order 1/eps; the mixed
(Dirichlet on plates) problem has an inverse of size ~|Q_v| |log eps|; and
M(-1) restricted to traces orthogonal to plate constants has an inverse of
order eps.
"""

import math

from thingraph import boundary as bd
from thingraph.graph_model import corpus_graph
from thingraph.thin_mesh import build_mesh, zaremba_inverse_norm

graph = corpus_graph("star3")
print(f"{'eps':>8} {'|l2|*eps':>10} {'Zaremba/|Q|':>12} {'x|log eps|':>11} {'perp/eps':>9}")
for k in range(3, 7):
    eps = 2.0 ** -k
    mesh = build_mesh(graph, eps, 4)
    l2 = abs(bd.steklov_spectrum(mesh, "c", 2)[1])
    z = zaremba_inverse_norm(mesh, "c") / mesh.realized_area("c")
    perp = bd.perp_block_inverse_norm(bd.calculus(mesh).m_function(-1.0), bd.vertex_projection(mesh))
    print(f"{eps:8.4g} {l2 * mesh.realized_epsilon:10.3f} {z:12.4f} {z * abs(math.log(eps)):11.4f} "
          f"{perp / mesh.realized_epsilon:9.3f}")
