import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fpident.qp import DualNotConverged, gershgorin_bound, projected_residual, solve_nonneg_qp


def _kkt(A, b, x):
    g = 2 * A @ x + b
    return x.min(), g.min(), np.abs(x * g).max()


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.integers(0, 12), st.integers(0, 2**32 - 1),
       st.sampled_from([1e-6, 1e-2, 1.0]))
def test_kkt_conditions(k, rank, seed, ridge):
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(k, max(rank, 1)))
    A = B @ B.T * (rank > 0) + ridge * np.eye(k)
    b = rng.normal(size=k) * 3
    # default tolerance: with ridge 1e-6 the multipliers reach ~1e6, where a
    # gradient residual much below 1e-8 is float64 round-off
    r = solve_nonneg_qp(A, b)
    xmin, gmin, slack = _kkt(A, b, r.x)
    scale = 1 + np.abs(b).max()
    assert xmin >= 0
    assert gmin >= -1e-8 * scale
    assert slack <= 1e-8 * scale * (1 + r.x.max())


def test_matches_brute_force_small():
    A = np.array([[2.0, 0.5], [0.5, 1.0]])
    b = np.array([-1.0, 2.0])
    x = solve_nonneg_qp(A, b).x
    # coordinate 2 is clamped; coordinate 1 solves 4 x1 - 1 = 0
    assert np.allclose(x, [0.25, 0.0], atol=1e-9)


def test_already_optimal_and_empty():
    A = np.eye(3)
    assert solve_nonneg_qp(A, np.ones(3)).iterations == 0
    assert solve_nonneg_qp(np.zeros((0, 0)), np.zeros(0)).x.size == 0


def test_zero_curvature():
    assert np.array_equal(solve_nonneg_qp(np.zeros((2, 2)), np.array([1.0, 0.0])).x, [0.0, 0.0])
    with pytest.raises(DualNotConverged):
        solve_nonneg_qp(np.zeros((2, 2)), np.array([1.0, -1.0]))


def test_shape_check_and_helpers():
    with pytest.raises(ValueError):
        solve_nonneg_qp(np.eye(2), np.ones(3))
    assert gershgorin_bound(np.array([[1.0, -2.0], [-2.0, 1.0]])) == 3.0
    assert projected_residual(np.zeros(2), np.ones(2)) == 0.0


def test_iteration_cap_reports_last_iterate():
    rng = np.random.default_rng(0)
    B = rng.normal(size=(30, 30))
    A = B @ B.T * 1e3 + 1e-9 * np.eye(30)
    with pytest.raises(DualNotConverged) as ei:
        solve_nonneg_qp(A, rng.normal(size=30), tol=1e-14, max_iter=3)
    assert ei.value.last.shape == (30,) and ei.value.iterations == 3
