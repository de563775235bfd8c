"""A regular agent between two stubborn agents: simulation against the exact answer.

One regular agent talks to stubborn agents holding 1 and 0.  The expected
final opinion is 1/2 by symmetry, and the time-averaged gossip trajectory
should approach it.  Run:  python demos/tiny_oracle.py
"""
import numpy as np

from gossip_conc.analytic_solver import expected_final_opinions
from gossip_conc.gossip_engine import InteractionDistribution, init_trajectory, run_inplace, time_average
from gossip_conc.graph_models import SampledGraph, assemble_system

g = SampledGraph(n_r=1, n_s=2, edges=np.array([[0, 1], [0, 2]]), seed=0)
z = np.array([1.0, 0.0])
x = expected_final_opinions(assemble_system(g), z).x
print(f"exact expected opinion: {x[0]:.6f}")

dist = InteractionDistribution.from_graph(g)
tr = init_trajectory([0.9], z, seed=42)
for t in (10, 1_000, 100_000, 1_000_000):
    run_inplace(tr, dist, t - tr.t)
    print(f"t = {t:>9,d}   X(t) = {tr.x[0]:.4f}   S(t) = {time_average(tr)[0]:.5f}")
print("X(t) keeps jumping; its running average settles on the exact value.")
