"""Grid search for the density and Fokker-Planck hyperparameters."""

import logging
from dataclasses import dataclass

import numpy as np

from . import fp
from .density import log_likelihood_grid
from .kernels import GaussianKernelParams
from .qp import DualNotConverged

logger = logging.getLogger(__name__)


class SelectionError(RuntimeError):
    pass


def _grid(values, name):
    vals = [float(v) for v in np.ravel(values)]
    if not vals:
        raise ValueError(f"{name} grid is empty")
    if not all(np.isfinite(v) and v > 0 for v in vals):
        raise ValueError(f"{name} grid must hold positive finite values")
    return tuple(vals)


@dataclass(frozen=True)
class GridSpec:
    nu_grid: tuple = (0.1, 0.3, 1.0, 3.0)
    mu_grid: tuple = (2.0, 3.0, 4.0, 6.0)
    gammak_grid: tuple = (0.1, 0.3, 1.0)
    lambda_grid: tuple = (1e-8, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1)

    def __post_init__(self):
        for name in ("nu_grid", "mu_grid", "gammak_grid", "lambda_grid"):
            object.__setattr__(self, name, _grid(getattr(self, name), name))

    def to_record(self):
        return {k: list(getattr(self, k)) for k in
                ("nu_grid", "mu_grid", "gammak_grid", "lambda_grid")}


@dataclass
class ScoreTable:
    """One row per grid cell: ``(param_a, param_b, score)``; failed cells hold ``nan``."""

    names: tuple
    rows: list
    failures: list

    def best(self, maximize):
        ok = [r for r in self.rows if np.isfinite(r[2])]
        if not ok:
            raise SelectionError("every grid cell failed: "
                                 + "; ".join(f"{c}: {m}" for c, m in self.failures))
        # ties go to the smaller (first, then second) hyperparameter
        key = (lambda r: (-r[2], r[0], r[1])) if maximize else (lambda r: (r[2], r[0], r[1]))
        return min(ok, key=key)

    def to_csv_rows(self):
        return [dict(zip(self.names + ("score",), r)) for r in self.rows]


def select_density_hparams(train, val, grid):
    """Maximize the validation log-likelihood over ``nu_grid x mu_grid``."""
    nus = sorted(set(grid.nu_grid))
    mus = sorted(set(grid.mu_grid))
    scores, failed = log_likelihood_grid(train, val, nus, mus)
    rows = [(nu, mu, float(scores[i, j])) for i, nu in enumerate(nus) for j, mu in enumerate(mus)]
    table = ScoreTable(("nu", "mu"), rows, [(c, m) for c, m in failed])
    nu, mu, _ = table.best(maximize=True)
    return nu, mu, table


def select_fp_hparams(fp_train, fp_val, grid, density_model=None, constrained=True):
    """Minimize the validation FP mean-squared error over ``gammak_grid x lambda_grid``.

    ``density_model`` is accepted for provenance only: both sets already carry
    their density evaluations.
    """
    gammas = sorted(set(grid.gammak_grid))
    lams = sorted(set(grid.lambda_grid))
    rows, failures = [], []
    for g in gammas:
        kp = GaussianKernelParams(g)
        tilde = fp.assemble_tilde_gram(fp_train, kp)
        cache = fp.ValidationCache(fp_val, fp_train, kp)
        for lam in lams:
            try:
                if constrained:
                    model = fp.fit_fp_constrained(fp_train, lam, kp, tilde=tilde)
                else:
                    model = fp.fit_fp(fp_train, lam, kp, tilde=tilde)
                score = fp.fp_residual_mse(model, fp_val, cache)
            except (fp.FPFitError, DualNotConverged, np.linalg.LinAlgError) as exc:
                failures.append(((g, lam), str(exc)))
                score = np.nan
            logger.debug("fp cell gamma=%g lambda=%g mse=%g", g, lam, score)
            rows.append((g, lam, score))
        del tilde, cache
    table = ScoreTable(("gammak", "lambda"), rows, failures)
    g, lam, _ = table.best(maximize=False)
    if len(lams) > 2 and lam in (lams[0], lams[-1]):
        logger.warning("selected lambda=%g is a grid endpoint; the grid may be mis-scaled", lam)
    return g, lam, table

