import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from fpident.data import PathDataset
from fpident.metrics import cvar_gap, density_l2_grid, empirical_cvar, moment_gaps, moment_track

samples = arrays(np.float64, st.integers(1, 200),
                 elements=st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False))
alphas = st.floats(0.001, 1.0)


@settings(max_examples=100)
@given(samples, alphas, alphas)
def test_cvar_monotone_in_alpha(x, a1, a2):
    lo, hi = sorted((a1, a2))
    assert empirical_cvar(x, lo) >= empirical_cvar(x, hi) - 1e-9 * (1 + np.abs(x).max())


@settings(max_examples=100)
@given(samples, alphas, st.floats(-100, 100), st.floats(0.01, 100))
def test_cvar_translation_and_homogeneity(x, a, c, s):
    base = empirical_cvar(x, a)
    tol = 1e-9 * (1 + np.abs(x).max()) * (1 + s + abs(c))
    assert abs(empirical_cvar(x + c, a) - (base + c)) <= tol
    assert abs(empirical_cvar(s * x, a) - s * base) <= tol


@settings(max_examples=100)
@given(samples, alphas)
def test_cvar_bounded_by_mean_and_max(x, a):
    c = empirical_cvar(x, a)
    tol = 1e-9 * (1 + np.abs(x).max())
    assert x.mean() - tol <= c <= x.max() + tol


def test_cvar_fractional_tail():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    assert empirical_cvar(x, 0.25) == 4.0
    assert np.isclose(empirical_cvar(x, 0.375), (4.0 + 0.5 * 3.0) / 1.5)
    with pytest.raises(ValueError):
        empirical_cvar(x, 0.0)
    with pytest.raises(ValueError):
        empirical_cvar([], 0.5)


def test_moment_gaps_and_alignment():
    t = np.linspace(0, 1, 3)
    a = PathDataset(t, np.array([[0.0, 1.0, 2.0], [2.0, 3.0, 4.0]]))
    b = PathDataset(t, np.array([[1.0, 2.0, 3.0], [3.0, 4.0, 5.0]]))
    mg, vg = moment_gaps(moment_track(a), moment_track(b))
    assert np.allclose(mg, 1.0) and np.allclose(vg, 0.0)
    c = PathDataset(t + 0.5, b.paths)
    with pytest.raises(ValueError):
        moment_gaps(moment_track(a), moment_track(c))
    with pytest.raises(ValueError):
        moment_track(PathDataset(t, a.paths[:1]))
    assert cvar_gap(a, b, alpha=0.5) == pytest.approx(1.0)


def test_l2_grid():
    g = lambda z: np.exp(-0.5 * z[:, 0] ** 2) / np.sqrt(2 * np.pi)  # noqa: E731
    zero = lambda z: np.zeros(len(z))  # noqa: E731
    ax = [np.linspace(-8, 8, 1601)]
    assert np.isclose(density_l2_grid(g, zero, ax) ** 2, 1 / (2 * np.sqrt(np.pi)), rtol=1e-6)
    with pytest.raises(ValueError):
        density_l2_grid(g, zero, [np.array([0.0, 1.0, 3.0])])
    with pytest.raises(ValueError):
        density_l2_grid(g, zero, [])
