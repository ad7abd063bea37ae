"""Recover random-graph parameters and model families by spectral divergence.

An ER graph's edge probability is recovered from its fitted density, and a
Barabasi-Albert graph is matched against smaller ER, WS and BA candidates.
"""

from egspec.analysis import classify_network, fit_graph, infer_parameter
from egspec.generators import barabasi_albert, erdos_renyi
from egspec.moments import ProbeConfig

cfg = ProbeConfig(d=100, seed=0)
target = fit_graph(erdos_renyi(100, 0.6, seed=3), 30, ProbeConfig(d=100, seed=3))
res = infer_parameter(target, "ER", 100, cfg=cfg)
print(f"ER(100, 0.6): recovered p = {res.parameter:.3f} after {len(res.evaluations)} candidates")

target = fit_graph(barabasi_albert(2000, 5, seed=0), 30, ProbeConfig(d=100, seed=1))
for r in classify_network(target, 500, cfg):
    print(f"{r.family}: best parameter {r.parameter:.4g}, divergence {r.divergence:.5f}")
