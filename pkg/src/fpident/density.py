"""Time-indexed density estimation from sample paths.

The estimator is

    p(t, x) = k_t(t)^T (K_t + r I)^{-1} g(x),    g_l(x) = Q^{-1} sum_k rho(x, X_kl),

a Gaussian-kernel interpolation in time of per-time Gaussian mixtures with
smoother ``rho(x, y) = mu^n (2 pi)^{-n/2} exp(-mu^2/2 ||x - y||^2)`` and
temporal kernel ``k_t(t, t') = exp(-nu (t - t')^2)``; ``r = TEMPORAL_RIDGE``.
"""

from dataclasses import dataclass

import numpy as np

from .data import PathDataset
from .kernels import temporal_gram, temporal_gram_dt
from .linalg import JitteredCholesky

LOG_FLOOR = 1e-12

# Relative ridge on the temporal Gram.  Pure interpolation (the smallest jitter
# that factorizes, ~1e-10) leaves K_t with condition numbers near 1e11, and the
# evaluated density then carries ~1e-7 of rounding noise that finite
# differences in t or x cannot see through.  At 1e-6 the density changes by
# well under the estimator's own error while its derivatives stay consistent
# with finite differences to ~1e-6.
TEMPORAL_RIDGE = 1e-6

# upper bound on the number of (query, time, path) triples held in memory at once
_CHUNK_ELEMS = 2_000_000


class DensityFitError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class DensityModel:
    nu: float
    mu: float
    train: PathDataset
    kt_chol: JitteredCholesky

    @property
    def n(self):
        return self.train.n

    @property
    def Kt_inv(self):
        return self.kt_chol.inverse()

    def __call__(self, t, x):
        return predict_density(self, t, x, with_derivs=False).P


@dataclass(frozen=True)
class DensityEvaluation:
    """Density values and derivatives aligned to a list of evaluation points.

    ``Pi[:, i]`` is the derivative in ``x_i``, ``Pij[:, i, j]`` the second
    derivative in ``x_i, x_j`` and ``dhat`` the time derivative.
    """

    P: np.ndarray
    Pi: np.ndarray = None
    Pij: np.ndarray = None
    dhat: np.ndarray = None

    def __len__(self):
        return self.P.shape[0]

    def take(self, idx):
        pick = lambda a: None if a is None else a[idx]  # noqa: E731
        return DensityEvaluation(self.P[idx], pick(self.Pi), pick(self.Pij), pick(self.dhat))

    @staticmethod
    def concatenate(evals):
        evals = list(evals)

        def cat(name):
            parts = [getattr(e, name) for e in evals]
            return None if any(p is None for p in parts) else np.concatenate(parts)
        return DensityEvaluation(cat("P"), cat("Pi"), cat("Pij"), cat("dhat"))


def fit_density(data, nu, mu):
    if not (nu > 0 and mu > 0):
        raise ValueError(f"nu and mu must be positive, got nu={nu}, mu={mu}")
    Kt = temporal_gram(data.times, data.times, nu)
    Kt[np.diag_indices_from(Kt)] += TEMPORAL_RIDGE
    try:
        chol = JitteredCholesky(Kt)
    except np.linalg.LinAlgError as exc:
        raise DensityFitError(f"temporal Gram factorization failed (nu={nu}): {exc}") from exc
    return DensityModel(float(nu), float(mu), data, chol)


def _mixture_stats(model, xq, with_derivs):
    """Per-time mixture ``g_l`` at query states, plus its spatial derivatives.

    Returns arrays of shape ``(U, M)``, ``(U, M, n)`` and ``(U, M, n, n)``.
    """
    X = model.train.paths  # (Q, M, n)
    Q, M, n = X.shape
    mu2 = model.mu**2
    norm = model.mu**n * (2.0 * np.pi) ** (-n / 2.0) / Q
    U = xq.shape[0]
    g = np.empty((U, M))
    gi = np.empty((U, M, n)) if with_derivs else None
    gij = np.empty((U, M, n, n)) if with_derivs else None
    Xt = np.ascontiguousarray(np.transpose(X, (1, 0, 2)))  # (M, Q, n)
    step = max(1, _CHUNK_ELEMS // (Q * M))
    for a in range(0, U, step):
        b = min(U, a + step)
        D = xq[a:b, None, None, :] - Xt[None, :, :, :]  # (u, M, Q, n)
        R = np.exp(-0.5 * mu2 * np.einsum("umqi,umqi->umq", D, D)) * norm
        g[a:b] = R.sum(axis=2)
        if with_derivs:
            # rho_i = -mu^2 D_i rho ;  rho_ij = -mu^2 (D_j rho_i + delta_ij rho)
            RD = np.einsum("umq,umqi->umqi", R, D)
            gi[a:b] = -mu2 * RD.sum(axis=2)
            gij[a:b] = mu2 * mu2 * np.einsum("umqi,umqj->umij", RD, D)
            gij[a:b] -= mu2 * g[a:b, :, None, None] * np.eye(n)
    return g, gi, gij


def _coefficients(model, rows):
    """``K_t^{-1} rows^T``: rows of per-time values ``(R, M)`` to coefficients ``(M, R)``."""
    return model.kt_chol.solve(np.ascontiguousarray(rows.T))


def _split_points(points, t, x):
    if x is None:
        Z = np.asarray(points if t is None else t, dtype=float)
        if Z.ndim != 2:
            raise ValueError("evaluation points must be an (N, 1+n) array")
        return Z[:, 0], Z[:, 1:]
    t = np.asarray(t, dtype=float).ravel()
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if t.size == 1 and x.shape[0] > 1:
        t = np.full(x.shape[0], t[0])
    if t.shape[0] != x.shape[0]:
        raise ValueError(f"{t.shape[0]} times but {x.shape[0]} states")
    return t, x


def predict_density(model, t, x=None, with_derivs=True):
    """Evaluate the density (and derivatives) at paired points ``(t[j], x[j])``.

    ``t`` may also be an ``(N, 1+n)`` array of points, in which case ``x`` is
    omitted.  Repeated states and times are evaluated once, so product grids
    cost ``O(unique_x * M * Q)``.
    """
    t, x = _split_points(None, t, x)
    if x.shape[1] != model.n:
        raise ValueError(f"state dimension {x.shape[1]} does not match model n={model.n}")
    ux, xinv = np.unique(x, axis=0, return_inverse=True)
    ut, tinv = np.unique(t, return_inverse=True)
    xinv, tinv = xinv.ravel(), tinv.ravel()

    # Solving against the mixtures (not the temporal kernel vectors) makes p an
    # exact Gaussian-kernel expansion in t: with an ill-conditioned K_t the
    # solve error is then a fixed perturbation of the coefficients rather than
    # noise that varies with the query time, and dhat is the exact derivative.
    times = model.train.times
    g, gi, gij = _mixture_stats(model, ux, with_derivs)
    kt = temporal_gram(ut, times, model.nu)[tinv]  # (N, M)
    P = np.einsum("jm,mj->j", kt, _coefficients(model, g)[:, xinv])
    if not with_derivs:
        return DensityEvaluation(P)
    U, M, n = gi.shape
    dhat = np.einsum("jm,mj->j", temporal_gram_dt(ut, times, model.nu)[tinv],
                     _coefficients(model, g)[:, xinv])
    Ai = _coefficients(model, gi.transpose(0, 2, 1).reshape(U * n, M)).reshape(M, U, n)
    Aij = _coefficients(model, gij.transpose(0, 2, 3, 1).reshape(U * n * n, M))
    Pi = np.einsum("jm,mji->ji", kt, Ai[:, xinv])
    Pij = np.einsum("jm,mjab->jab", kt, Aij.reshape(M, U, n, n)[:, xinv])
    Pij = 0.5 * (Pij + np.swapaxes(Pij, 1, 2))
    return DensityEvaluation(P, Pi, Pij, dhat)


def log_likelihood(model, val, floor=LOG_FLOOR):
    """Sum of ``log(max(p(t_l, x_i), floor))`` over every validation observation."""
    if val is None or val.Q == 0 or val.M == 0:
        raise ValueError("empty validation set")
    Z = val.points()
    P = predict_density(model, Z[:, 0], Z[:, 1:], with_derivs=False).P
    return float(np.sum(np.log(np.maximum(P, floor))))


def evaluate_on_grid(model, t_grid, x_grid):
    """Density on the product grid ``t_grid x x_grid``; returns shape ``(len(t), len(x))``."""
    t_grid = np.asarray(t_grid, dtype=float).ravel()
    x_grid = np.asarray(x_grid, dtype=float)
    if x_grid.ndim == 1:
        x_grid = x_grid[:, None]
    T = np.repeat(t_grid, x_grid.shape[0])
    X = np.tile(x_grid, (t_grid.size, 1))
    return predict_density(model, T, X, with_derivs=False).P.reshape(t_grid.size, -1)


def log_likelihood_grid(data, val, nus, mus, floor=LOG_FLOOR):
    """Validation log-likelihood for every ``(nu, mu)`` cell.

    The per-time mixtures depend on ``mu`` only, so they are computed once per
    ``mu`` and reused across ``nu``.  Returns ``scores[i, j]`` for ``nus[i], mus[j]``
    (``nan`` where the temporal Gram could not be factorized) and the failures.
    """
    if val is None or val.Q == 0 or val.M == 0:
        raise ValueError("empty validation set")
    Z = val.points()
    t, x = Z[:, 0], Z[:, 1:]
    ux, xinv = np.unique(x, axis=0, return_inverse=True)
    ut, tinv = np.unique(t, return_inverse=True)
    xinv, tinv = xinv.ravel(), tinv.ravel()
    chols, failed = {}, []
    for nu in nus:
        try:
            chols[nu] = fit_density(data, nu, mus[0])
        except DensityFitError as exc:
            failed.append(((nu, None), str(exc)))
    kts = {nu: temporal_gram(ut, data.times, nu)[tinv] for nu in chols}
    scores = np.full((len(nus), len(mus)), np.nan)
    for j, mu in enumerate(mus):
        model = DensityModel(float(nus[0]), float(mu), data, None)
        g = _mixture_stats(model, ux, False)[0]
        for i, nu in enumerate(nus):
            if nu in chols:
                P = np.einsum("jm,mj->j", kts[nu], _coefficients(chols[nu], g)[:, xinv])
                scores[i, j] = float(np.sum(np.log(np.maximum(P, floor))))
    return scores, failed
