"""Two different SDEs with exactly the same marginal densities.

A stationary OU process keeps its law when theta and sigma^2 are scaled by the
same factor: the stationary variance sigma^2 / (2 theta) is unchanged.  A
density-based method therefore cannot tell the two apart; only their path
correlations differ.
"""

import numpy as np

from fpident import processes
from fpident.metrics import density_l2_grid, moment_track
from fpident.simulate import simulate_process

a, b = processes.nonidentifiability_pair(theta=0.5, sigma=np.sqrt(0.125), scale=2.0, mu=1.0)
print("process A:", {k: round(float(v), 4) for k, v in a.params.items()})
print("process B:", {k: round(float(v), 4) for k, v in b.params.items()})

axes = [np.linspace(0, 10, 21), np.linspace(-1, 3, 201)]
l2 = density_l2_grid(lambda z: processes.ou_pdf(a, z[:, 0], z[:, 1]),
                     lambda z: processes.ou_pdf(b, z[:, 0], z[:, 1]), axes)
print(f"L2 distance between the analytic densities: {l2:.1e}")

pa = simulate_process(a, 5000, 51, seed=1)
pb = simulate_process(b, 5000, 51, seed=2)
ma, mb = moment_track(pa), moment_track(pb)
print(f"max |mean A - mean B| {np.abs(ma.mean - mb.mean).max():.4f} "
      f"(standard error ~{ma.stderr.max():.4f})")


def lag_corr(d, lag):
    x = d.paths[:, :, 0]
    return np.corrcoef(x[:, 20], x[:, 20 + lag])[0, 1]


# what differs: the autocorrelation exp(-theta * dt)
for lag in (1, 5):
    dt = lag * 0.2
    print(f"corr(X_t, X_t+{dt:.1f}): A {lag_corr(pa, lag):.3f} "
          f"(exp(-0.5 dt)={np.exp(-0.5 * dt):.3f}), "
          f"B {lag_corr(pb, lag):.3f} (exp(-1.0 dt)={np.exp(-dt):.3f})")
