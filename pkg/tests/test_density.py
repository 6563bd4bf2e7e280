import numpy as np
import pytest

from fpident import processes
from fpident.data import PathDataset
from fpident.density import (DensityEvaluation, evaluate_on_grid, fit_density, log_likelihood,
                             log_likelihood_grid, predict_density)
from fpident.simulate import simulate_process


@pytest.fixture(scope="module")
def ou_small():
    return simulate_process(processes.ou(), 80, 21, substeps=5, seed=11)


@pytest.fixture(scope="module")
def dubins_small():
    return simulate_process(processes.dubins(), 40, 11, substeps=5, seed=12)


def test_reproduces_mixture_at_training_times(ou_small):
    m = fit_density(ou_small, 1.0, 4.0)
    x = np.linspace(-1, 4, 7)
    l = 5
    t = np.full(x.size, ou_small.times[l])
    X = ou_small.paths[:, l, 0]
    g = 4.0 / np.sqrt(2 * np.pi) * np.exp(-8.0 * (x[:, None] - X[None]) ** 2).mean(axis=1)
    # near-interpolation: the temporal ridge moves values by O(ridge * cond) only
    assert np.allclose(m(t, x[:, None]), g, atol=1e-5)


def test_mass_near_one_at_training_time(ou_small):
    m = fit_density(ou_small, 1.0, 4.0)
    x = np.linspace(-3, 6, 2001)
    p = m(np.full(x.size, ou_small.times[10]), x[:, None])
    assert abs(np.sum(p) * (x[1] - x[0]) - 1) < 1e-4


@pytest.mark.parametrize("which", ["ou", "dubins"])
def test_derivatives_match_fd(which, ou_small, dubins_small):
    data = ou_small if which == "ou" else dubins_small
    m = fit_density(data, 0.7, 3.0)
    rng = np.random.default_rng(0)
    t = rng.uniform(1, 9, 15)
    x = rng.normal(1.0, 1.0, (15, data.n))
    ev = predict_density(m, t, x)
    h = 1e-5
    for i in range(data.n):
        e = np.zeros(data.n)
        e[i] = h
        plus, minus = predict_density(m, t, x + e), predict_density(m, t, x - e)
        assert np.allclose(ev.Pi[:, i], (plus.P - minus.P) / (2 * h), atol=1e-7)
        assert np.allclose(ev.Pij[:, :, i], (plus.Pi - minus.Pi) / (2 * h), atol=1e-6)
    dt = (predict_density(m, t + h, x).P - predict_density(m, t - h, x).P) / (2 * h)
    assert np.allclose(ev.dhat, dt, atol=1e-7)


def test_point_array_form_and_grid(ou_small):
    m = fit_density(ou_small, 1.0, 4.0)
    t, x = np.array([1.0, 2.0]), np.array([[0.3], [1.1]])
    a = predict_density(m, np.column_stack([t, x]), with_derivs=False).P
    assert np.allclose(a, m(t, x))
    G = evaluate_on_grid(m, t, np.array([0.3, 1.1]))
    assert G.shape == (2, 2) and np.isclose(G[0, 0], a[0]) and np.isclose(G[1, 1], a[1])
    with pytest.raises(ValueError):
        predict_density(m, t, np.zeros((2, 2)))


def test_likelihood_grid_matches_single_fits(ou_small):
    val = simulate_process(processes.ou(), 10, 21, substeps=5, seed=99)
    scores, failed = log_likelihood_grid(ou_small, val, [0.3, 1.0], [2.0, 4.0])
    assert not failed
    for i, nu in enumerate([0.3, 1.0]):
        for j, mu in enumerate([2.0, 4.0]):
            assert np.isclose(scores[i, j], log_likelihood(fit_density(ou_small, nu, mu), val),
                              rtol=1e-10)


def test_invalid_hyperparameters(ou_small):
    with pytest.raises(ValueError):
        fit_density(ou_small, 0.0, 1.0)
    with pytest.raises(ValueError):
        fit_density(ou_small, 1.0, -1.0)


def test_evaluation_take_and_concatenate():
    ev = DensityEvaluation(np.arange(3.0), np.ones((3, 1)), np.ones((3, 1, 1)), np.zeros(3))
    both = DensityEvaluation.concatenate([ev.take([0]), ev.take([1, 2])])
    assert np.array_equal(both.P, ev.P) and both.Pij.shape == (3, 1, 1)
    assert DensityEvaluation.concatenate([ev, DensityEvaluation(np.ones(1))]).Pi is None


def test_pathdataset_validation():
    with pytest.raises(ValueError):
        PathDataset([0.0, 1.0], np.zeros((2, 3)))
    with pytest.raises(ValueError):
        PathDataset([1.0, 0.0], np.zeros((2, 2)))
    with pytest.raises(ValueError):
        PathDataset([0.0, 1.0], np.array([[0.0, np.nan]]))
    d = PathDataset([0.0, 1.0], np.arange(4.0).reshape(2, 2))
    assert (d.Q, d.M, d.n) == (2, 2, 1)
    assert d.points().shape == (4, 2)
