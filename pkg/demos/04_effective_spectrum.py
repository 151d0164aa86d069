"""The limiting graph operator: its spectrum and how the thin domain approaches it.

Vertex masses |Q_v^0| turn the vertex condition energy dependent. The
eigenvalues come from the secular determinant and are cross-checked with a
finite-difference oracle; the lowest thin-domain Neumann eigenvalues drift
towards them as eps decreases.
"""

import numpy as np

from thingraph.effective import EffectiveOperator, build_effective, oracle_eigenvalues, spectrum
from thingraph.graph_model import corpus_graph
from thingraph.lab import hausdorff_spectra, thin_spectrum
from thingraph.thin_mesh import build_mesh

graph = corpus_graph("star3")
op = build_effective(graph)
vals = np.array(spectrum(op, (0, 30)))
print("graph eigenvalues on [0,30]:", vals.round(6))
print(f"oracle agreement: {np.abs(vals - oracle_eigenvalues(op, 256, len(vals))).max():.1e}")

kirchhoff = spectrum(build_effective(graph.with_areas([1e-8] * graph.N)), (0, 30))
print("zero vertex mass (Kirchhoff):", np.round(kirchhoff, 6))

for eps in (1 / 8, 1 / 16, 1 / 32):
    mesh = build_mesh(graph, eps, 4)
    eff = spectrum(EffectiveOperator.for_mesh(mesh), (0, 14))
    thin = thin_spectrum(mesh, (0, 14), len(eff) + 4, 1e-10, 0)
    print(f"eps={eps:.4g}: Hausdorff distance on [0,12] = {hausdorff_spectra(thin, eff, (0, 12)):.4f}")
