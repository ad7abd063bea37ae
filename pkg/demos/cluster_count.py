"""Count clusters from the mass of the spectral density below its first valley.

Planted graphs of dense random clusters, with and without a few edges
between clusters, compared against the exact count of near-zero
eigenvalues.
"""

import numpy as np

from egspec.analysis import estimate_clusters, fit_graph
from egspec.generators import ModelSpec, planted_clusters
from egspec.graph import make_operator
from egspec.moments import ProbeConfig

cluster = ModelSpec("ER", {"p": 0.5})
for c, inter in ((3, 0), (9, 0), (9, 9), (15, 15)):
    g = planted_clusters([(30, cluster)] * c, inter, seed=0)
    ev = np.linalg.eigvalsh(make_operator(g).to_dense())
    est = estimate_clusters(fit_graph(g, 80, ProbeConfig(d=100, seed=0)), g.n)
    print(f"clusters={c:2d} inter-edges={inter:2d}  eigenvalues<0.01: {np.sum(ev < 0.01):2d}  "
          f"estimate={est.n_clusters:6.3f}  valley at {est.lambda_star:.4f}")
