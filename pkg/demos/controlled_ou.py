"""Learn a controlled OU process dX = theta (u(t) - X) dt + sigma dW.

The control value is appended to the kernel input, z = (t, x, u(t)), and the
Fokker-Planck sets of every training control are stacked into one regression.
The fitted model is then driven by a control it has never seen.

Reduced scale; the full experiment is ``fpident reproduce controlled-ou``.
"""

import numpy as np

from fpident import processes
from fpident.controlled import (GridSampler, build_controlled_fp_set, fit_controlled_density,
                                fit_controlled_fp, generate_controlled_dataset)
from fpident.controls import TWO_STEP_RANGES, sample_controls, two_step
from fpident.kernels import GaussianKernelParams
from fpident.metrics import moment_track
from fpident.simulate import config_for, simulate_estimated

proc = processes.controlled_ou()
controls = sample_controls("two_step", TWO_STEP_RANGES, 8, seed=1)
data = generate_controlled_dataset(proc, controls, config_for(proc, 200, 41, 10, seed=2))

densities = fit_controlled_density(data, 1.0, 6.0)
train = build_controlled_fp_set(data, densities, GridSampler(10, 25, seed=3))
model = fit_controlled_fp(train, 1e-3, GaussianKernelParams(0.1), controls)
print(f"stacked training set: {train.N} points from {data.K} controls")

# a held-out control inside the range covered by the training controls
u = two_step(0.8, -0.6, 5.0)
est = simulate_estimated(model.field, config_for(proc, 1000, 41, 10, seed=4), u)
mean, _ = processes.analytic_controlled_ou_moments(proc, u, est.times)
gap = np.abs(moment_track(est).mean[:, 0] - mean)
print(f"held-out control {u.params}: max |mean gap| {gap.max():.3f}")
for t in (0.0, 2.5, 5.0, 7.5, 10.0):
    i = int(np.argmin(np.abs(est.times - t)))
    print(f"  t={est.times[i]:4.1f}: estimated mean {moment_track(est).mean[i, 0]:+.3f}, "
          f"analytic {mean[i]:+.3f}")
