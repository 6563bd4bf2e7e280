"""Nonparametric identification of (controlled) SDEs by Fokker-Planck matching.

Pipeline: estimate the path density ``p(t, x)`` from samples
(:mod:`fpident.density`), fit drift and diffusion so the Fokker-Planck
residual of that density vanishes (:mod:`fpident.fp`), then re-simulate the
estimated dynamics (:mod:`fpident.simulate`) and compare moments and CVaR
(:mod:`fpident.metrics`).
"""

from .controls import ControlSpec, sample_controls
from .data import PathDataset
from .density import DensityModel, fit_density, predict_density
from .fp import (FPModel, FPTrainingSet, build_fp_set, fit_fp, fit_fp_constrained,
                 fit_fp_nystrom, fp_residual_mse)
from .kernels import GaussianKernelParams
from .metrics import cvar_gap, empirical_cvar, moment_track
from .processes import ProcessDef
from .simulate import SimConfig, simulate, simulate_estimated

__version__ = "0.1.0"

__all__ = [
    "ControlSpec", "DensityModel", "FPModel", "FPTrainingSet", "GaussianKernelParams",
    "PathDataset", "ProcessDef", "SimConfig", "build_fp_set", "cvar_gap", "empirical_cvar",
    "fit_density", "fit_fp", "fit_fp_constrained", "fit_fp_nystrom", "fp_residual_mse",
    "moment_track", "predict_density", "sample_controls", "simulate", "simulate_estimated",
]
