import logging

import numpy as np
import pytest

from fpident import fp, processes
from fpident.density import fit_density, log_likelihood
from fpident.kernels import GaussianKernelParams
from fpident.selection import (GridSpec, ScoreTable, SelectionError, select_density_hparams,
                               select_fp_hparams)
from fpident.simulate import simulate_process


@pytest.fixture(scope="module")
def sets():
    proc = processes.ou()
    train = simulate_process(proc, 40, 11, substeps=4, seed=1)
    val = simulate_process(proc, 10, 11, substeps=4, seed=2)
    dm = fit_density(train, 1.0, 3.0)
    rng = np.random.default_rng(0)
    pts = lambda n: np.column_stack([rng.uniform(0, 10, n), rng.uniform(-0.5, 3.5, n)])  # noqa: E731
    return train, val, fp.build_fp_set(dm, pts(40)), fp.build_fp_set(dm, pts(20))


def test_singleton_grid(sets):
    train, val, ftr, fval = sets
    g = GridSpec((0.5,), (2.0,), (0.3,), (1e-2,))
    assert select_density_hparams(train, val, g)[:2] == (0.5, 2.0)
    assert select_fp_hparams(ftr, fval, g)[:2] == (0.3, 1e-2)


def test_permutation_and_duplicates_do_not_matter(sets):
    train, val, ftr, fval = sets
    a = GridSpec((0.3, 1.0, 3.0), (2.0, 4.0), (0.3, 1.0), (1e-3, 1e-2, 1e-1))
    b = GridSpec((3.0, 0.3, 1.0, 0.3), (4.0, 2.0), (1.0, 0.3, 1.0), (1e-1, 1e-3, 1e-2, 1e-3))
    assert select_density_hparams(train, val, a)[:2] == select_density_hparams(train, val, b)[:2]
    assert select_fp_hparams(ftr, fval, a)[:2] == select_fp_hparams(ftr, fval, b)[:2]


def test_best_score_equals_reevaluation(sets):
    train, val, ftr, fval = sets
    g = GridSpec((0.3, 1.0), (2.0, 4.0), (0.3, 1.0), (1e-3, 1e-2))
    nu, mu, table = select_density_hparams(train, val, g)
    best = max(r[2] for r in table.rows)
    assert abs(log_likelihood(fit_density(train, nu, mu), val) - best) <= 1e-10 * abs(best)
    gk, lam, table = select_fp_hparams(ftr, fval, g)
    m = fp.fit_fp_constrained(ftr, lam, GaussianKernelParams(gk))
    assert abs(fp.fp_residual_mse(m, fval) - min(r[2] for r in table.rows)) <= 1e-10


def test_ties_go_to_smaller_parameters():
    t = ScoreTable(("a", "b"), [(2.0, 1.0, 5.0), (1.0, 3.0, 5.0), (1.0, 2.0, 5.0)], [])
    assert t.best(maximize=True)[:2] == (1.0, 2.0)
    assert t.best(maximize=False)[:2] == (1.0, 2.0)


def test_all_cells_failed():
    t = ScoreTable(("a", "b"), [(1.0, 1.0, np.nan)], [((1.0, 1.0), "boom")])
    with pytest.raises(SelectionError, match="boom"):
        t.best(maximize=False)


def test_endpoint_warning(sets, caplog):
    _, _, ftr, fval = sets
    g = GridSpec(gammak_grid=(0.3,), lambda_grid=(1e-12, 1e-11, 1e-10))
    with caplog.at_level(logging.WARNING, logger="fpident.selection"):
        select_fp_hparams(ftr, fval, g, constrained=False)
    assert any("grid endpoint" in r.message for r in caplog.records)


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec(nu_grid=())
    with pytest.raises(ValueError):
        GridSpec(lambda_grid=(0.0,))
