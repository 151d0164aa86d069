"""Load a network, fatten it into a thin grid domain and look at what was built.

Each vertex becomes a small polygon of area eps * |template|, each edge a
strip of width eps. The grid spacing is eps / n_w, so lengths and areas come
out rounded to whole cells; the mesh reports the realized values.
"""

from thingraph.graph_model import corpus_graph, kappa
from thingraph.thin_mesh import assemble_neumann, build_mesh

graph = corpus_graph("triangle_pendant")
print(f"{graph.N} vertices, {len(graph.edges)} edges, total length {graph.total_length:.2f}")
print("vertex weights kappa =", kappa(graph))

for eps in (1 / 8, 1 / 16, 1 / 32):
    mesh = build_mesh(graph, eps, 4)
    s = mesh.summary()
    print(f"\neps={eps:.4g}: {s['n_cells']} cells, {s['n_trace']} plate faces, h={mesh.h:.4g}")
    print("  realized edge lengths:", mesh.realized_lengths().round(4))
    print("  realized template areas:", mesh.realized_template_areas().round(4))

A = assemble_neumann(build_mesh(graph, 1 / 16, 4))
print("\nNeumann grid operator: dimension", A.dimension, "symmetric:", abs(A.matrix - A.matrix.T).max() == 0)
