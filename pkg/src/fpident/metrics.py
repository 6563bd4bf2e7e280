"""Moment tracking, density distances and the empirical CVaR."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MomentTrack:
    """Per-time sample mean ``(M, n)``, unbiased variance ``(M, n)`` and the
    standard error of the mean ``(M, n)``."""

    times: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    stderr: np.ndarray
    Q: int


def moment_track(data):
    if data.Q < 2:
        raise ValueError("moment tracking needs at least two paths")
    X = data.paths
    mean = X.mean(axis=0)
    var = X.var(axis=0, ddof=1)
    return MomentTrack(np.asarray(data.times), mean, var, np.sqrt(var / data.Q), data.Q)


def _same_grid(a, b):
    if a.shape != b.shape or not np.array_equal(a, b):
        raise ValueError("time grids are not aligned")


def moment_gaps(reference, other):
    """Per-time ``|mean gap|`` (max over coordinates) and relative variance gap."""
    _same_grid(reference.times, other.times)
    mean_gap = np.max(np.abs(other.mean - reference.mean), axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.abs(other.var - reference.var) / reference.var
    rel = np.where(reference.var > 0, rel, np.where(other.var == reference.var, 0.0, np.inf))
    return mean_gap, np.max(rel, axis=1)


def density_l2_grid(p1, p2, axes):
    """Midpoint-rule ``L2`` distance between two densities.

    ``axes`` lists uniformly spaced cell centres per coordinate; ``p1`` and
    ``p2`` map an ``(P, len(axes))`` array of points to ``P`` values.
    """
    axes = [np.asarray(a, dtype=float).ravel() for a in axes]
    if not axes or any(a.size == 0 for a in axes):
        raise ValueError("grid is empty")
    vol = 1.0
    for a in axes:
        if a.size > 1:
            h = np.diff(a)
            if not np.allclose(h, h[0], rtol=1e-9, atol=0):
                raise ValueError("grid axes must be uniformly spaced")
            vol *= h[0]
    pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    d = np.asarray(p1(pts), dtype=float) - np.asarray(p2(pts), dtype=float)
    return float(np.sqrt(np.sum(d**2) * vol))


def empirical_cvar(samples, alpha):
    """Mean of the upper ``alpha`` tail, the high values being the bad outcomes.

    Minimizes ``t + E[max(0, X - t)] / alpha`` over the empirical law exactly:
    the ``floor(alpha Q)`` largest samples get full weight and the next one the
    fractional remainder.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("no samples")
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if alpha == 1.0:
        return float(np.mean(x))
    xs = np.sort(x)[::-1]
    k = alpha * x.size
    j = int(np.floor(k))
    total = xs[:j].sum()
    if k > j:
        total += (k - j) * xs[j]
    return float(total / k)


def cvar_gap(true_paths, est_paths, f=None, alpha=0.1):
    """``|CVaR(f(X_true(T))) - CVaR(f(X_est(T)))|`` on terminal states."""
    if not np.isclose(true_paths.times[-1], est_paths.times[-1]):
        raise ValueError("datasets do not share a terminal time")
    f = f or (lambda X: X[:, 0])
    a = f(true_paths.paths[:, -1])
    b = f(est_paths.paths[:, -1])
    return abs(empirical_cvar(a, alpha) - empirical_cvar(b, alpha))
