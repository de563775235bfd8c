"""How far is a sampled graph's solution operator from the expected graph's?

For the uniform stubborn model with c_s = 0.1 and psi = (log n)^2 / n, this
prints the measured deviation eps*_n next to the two closed-form bounds.
The bounds are conservative (and their hypotheses fail at these sizes), but
the measured deviation still shrinks roughly like 1 / log n.
Run:  python demos/scaling.py [trials]
"""
import sys

import numpy as np

from gossip_conc.experiments import ExperimentConfig, run_experiment

trials = int(sys.argv[1]) if len(sys.argv) > 1 else 5
res = run_experiment(ExperimentConfig("scaling", seed=0, trials=trials))
header, rows = res.tables["scaling"]
rows = np.array(rows, dtype=object)
print(f"{'n':>6} {'eps* (mean)':>12} {'bound (deg.)':>13} {'bound (spectral)':>17} {'ceiling':>9}")
for n, e in zip(res.summary["n"], res.summary["eps_star"]):
    r = rows[rows[:, 0] == n][0]
    fmt = lambda v: f"{v:.3g}" if np.isfinite(v) else "inf"
    print(f"{n:>6} {e:>12.4f} {fmt(r[4]):>13} {fmt(r[7]):>17} {fmt(r[10]):>9}")
print(f"slope of log eps* against log log n: {res.summary['slope_loglog']:.3f}")
