"""Fokker-Planck matching: kernel ridge regression of drift and uniform diffusion.

With a Gaussian kernel ``k`` on points ``z = (t, x[, v])`` and feature map
``phi(z) = k(z, .)``, the drift components and the scalar diffusion are
``b^i = <w_b^i, phi>`` and ``sigma^2 = <w_s, phi>``.  The Fokker-Planck operator
applied to the estimated density is then linear in ``w``:

    (L^*) p(z) = <w, phi~(z)>,   phi~ = (-phi~_i (i = 1..n) | 1/2 sum_i phi~_ii)

where ``phi~_S(z) = d^S [phi(z) p(z)]`` (Leibniz expansion over state
derivatives).  Ridge regression of the time derivative ``dp/dt`` onto these
features gives a representer solution over the training points; positivity of
``sigma^2`` at a constraint subset is enforced through a nonnegative dual QP.

Every fitted model reduces to two weight vectors: ``beta`` over feature points
(training points or Nystrom anchors) and ``eta`` over constraint points, with

    b^i(z)     = sum_f beta_f r_i^b(z_f, z)
    sigma^2(z) = sum_f beta_f r^s(z_f, z) + sum_c eta_c k(z_c, z)

where ``r_i^b(z_f, z) = -<phi~_i(z_f), phi(z)>`` and
``r^s(z_f, z) = 1/2 sum_i <phi~_ii(z_f), phi(z)>``.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .density import DensityEvaluation, predict_density
from .kernels import DerivGramSet, GaussianKernelParams, gram
from .linalg import FactorizationError, JitteredCholesky
from .qp import DEFAULT_MAX_ITER, DEFAULT_TOL, DualNotConverged, solve_nonneg_qp

logger = logging.getLogger(__name__)

# target number of entries per derivative block when tiling N x N' products
_TILE_ELEMS = 4_000_000


class FPFitError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class FPTrainingSet:
    """Fokker-Planck training points with the density evaluated at each.

    ``points`` has columns ``(t, x_1..x_n, v_1..v_d)``.  ``constraint_idx``
    selects the points where ``sigma^2 >= kappa`` is enforced.
    """

    points: np.ndarray
    dens: DensityEvaluation
    n: int
    constraint_idx: np.ndarray = None
    source: np.ndarray = None  # which density model produced each row

    def __post_init__(self):
        Z = np.asarray(self.points, dtype=float)
        if Z.ndim != 2 or Z.shape[1] < 1 + self.n:
            raise ValueError(f"points must be (N, >= 1+n), got {Z.shape}")
        N = Z.shape[0]
        d = self.dens
        if d.Pi is None or d.Pij is None or d.dhat is None:
            raise ValueError("density evaluation must include derivatives")
        if (d.P.shape != (N,) or d.Pi.shape != (N, self.n)
                or d.Pij.shape != (N, self.n, self.n) or d.dhat.shape != (N,)):
            raise ValueError("density arrays are misaligned with the training points")
        idx = (np.arange(N) if self.constraint_idx is None
               else np.unique(np.asarray(self.constraint_idx, dtype=int)))
        if idx.size and (idx.min() < 0 or idx.max() >= N):
            raise ValueError("constraint indices out of range")
        object.__setattr__(self, "points", Z)
        object.__setattr__(self, "constraint_idx", idx)
        if self.source is not None:
            object.__setattr__(self, "source", np.asarray(self.source, dtype=int))

    @property
    def N(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1] - 1 - self.n

    def take(self, idx, constraint_idx=None):
        idx = np.asarray(idx)
        return FPTrainingSet(self.points[idx], self.dens.take(idx), self.n, constraint_idx,
                             None if self.source is None else self.source[idx])

    def with_constraints(self, constraint_idx):
        return FPTrainingSet(self.points, self.dens, self.n, constraint_idx, self.source)


def build_fp_set(density_model, points, constraint_idx=None):
    """Evaluate ``density_model`` (value, derivatives, time derivative) at ``points``."""
    Z = np.asarray(points, dtype=float)
    n = density_model.n
    dens = predict_density(density_model, Z[:, 0], Z[:, 1:1 + n], with_derivs=True)
    return FPTrainingSet(Z, dens, n, constraint_idx)


# --- feature inner products ---------------------------------------------------

def _terms(dens, S):
    """Leibniz terms of ``phi~_S = d^S (phi p)`` as ``(kernel derivative, density factor)``.

    For ``S = (i,)``:   phi_i p + phi p_i
    For ``S = (i, i)``: phi_ii p + 2 phi_i p_i + phi p_ii   (the two mixed terms merged)
    """
    if len(S) == 1:
        (i,) = S
        return [((i,), dens.P), ((), dens.Pi[:, i])]
    i, j = S
    assert i == j
    return [((i, i), dens.P), ((i,), 2.0 * dens.Pi[:, i]), ((), dens.Pij[:, i, i])]


def _tiles(N1, N2):
    step = max(1, _TILE_ELEMS // max(N2, 1))
    return [(a, min(N1, a + step)) for a in range(0, N1, step)]


def tilde_gram(Z1, dens1, Z2, dens2, kparams, n):
    """``<phi~(z_p), phi~(z'_q)>`` for all pairs, built from derivative Gram blocks.

        K~ = sum_i K~_i + 1/4 sum_{i,j} K~_ii^jj

    with ``K~_i = K o P_i P_i^T + K_i o P P_i^T + K^i o P_i P^T + K_i^i o P P^T``
    and the analogous 16-term (here 9 after merging) expansion for ``K~_ii^jj``.
    """
    Z1 = np.asarray(Z1, dtype=float)
    Z2 = np.asarray(Z2, dtype=float)
    out = np.empty((Z1.shape[0], Z2.shape[0]))
    for a, b in _tiles(Z1.shape[0], Z2.shape[0]):
        S = DerivGramSet(Z1[a:b], Z2, kparams, n, max_order=4)
        d1 = dens1.take(slice(a, b))
        acc = np.zeros((b - a, Z2.shape[0]))
        for i in range(n):
            for A, c1 in _terms(d1, (i,)):
                for B, c2 in _terms(dens2, (i,)):
                    acc += S.block(A, B) * np.multiply.outer(c1, c2)
        for i in range(n):
            for j in range(n):
                for A, c1 in _terms(d1, (i, i)):
                    for B, c2 in _terms(dens2, (j, j)):
                        acc += 0.25 * S.block(A, B) * np.multiply.outer(c1, c2)
        out[a:b] = acc
    return out


def assemble_tilde_gram(train, kparams):
    """Symmetric ``N x N`` Gram of the Fokker-Planck features over the training set."""
    K = tilde_gram(train.points, train.dens, train.points, train.dens, kparams, train.n)
    return 0.5 * (K + K.T)


def cross_features(Zf, dens_f, Zq, kparams, n, sup=()):
    """``r_i^b(z_f, z_q)`` (shape ``(n, Nf, Nq)``) and ``r^s(z_f, z_q)`` (``(Nf, Nq)``).

    ``sup`` differentiates with respect to the query state coordinates, which
    gives the spatial derivatives of the predicted coefficients.
    """
    order = 2 + len(sup)
    S = DerivGramSet(Zf, Zq, kparams, n, max_order=4 if order > 2 else 2)
    rb = np.empty((n, Zf.shape[0], Zq.shape[0]))
    for i in range(n):
        rb[i] = -sum(S.block(A, sup) * c[:, None] for A, c in _terms(dens_f, (i,)))
    rs = np.zeros((Zf.shape[0], Zq.shape[0]))
    for i in range(n):
        for A, c in _terms(dens_f, (i, i)):
            rs += 0.5 * S.block(A, sup) * c[:, None]
    return rb, rs


def _kernel_sup(Zc, Zq, kparams, n, sup):
    if not sup:
        return gram(Zc, Zq, kparams)
    return DerivGramSet(Zc, Zq, kparams, n, max_order=4).block((), sup)


# --- coefficient field ----------------------------------------------------------

class CoefficientField:
    """Evaluator of ``(b(z), sigma^2(z))`` from representer weights.

    ``Zf, dens_f, beta``: feature points, their density factors and weights.
    ``Zc, eta``: constraint points carrying plain-kernel diffusion weights.
    """

    def __init__(self, Zf, dens_f, beta, Zc, eta, kparams, n):
        self.Zf = np.asarray(Zf, dtype=float)
        self.dens_f = dens_f
        self.beta = np.asarray(beta, dtype=float)
        keep = np.flatnonzero(np.asarray(eta) != 0) if len(eta) else np.array([], dtype=int)
        self.Zc = np.asarray(Zc, dtype=float)[keep] if len(keep) else np.zeros((0, self.Zf.shape[1]))
        self.eta = np.asarray(eta, dtype=float)[keep]
        self.kparams = kparams
        self.gamma = kparams.gamma
        self.n = n
        self.d = self.Zf.shape[1] - 1 - n
        # group feature rows by state so evaluations sharing (t, v) collapse duplicates
        self._ux, self._uinv = np.unique(self.Zf[:, 1:1 + n], axis=0, return_inverse=True)
        self._uinv = self._uinv.ravel()
        if len(self.eta):
            self._cx, self._cinv = np.unique(self.Zc[:, 1:1 + n], axis=0, return_inverse=True)
            self._cinv = self._cinv.ravel()
        P, Pi, Pij = dens_f.P, dens_f.Pi, dens_f.Pij
        self._A = self.beta * P
        self._B = self.beta[:, None] * Pi
        self._C = self.beta * 0.5 * np.einsum("fii->f", Pij)

    def __call__(self, Z):
        return self.predict(Z)

    def predict(self, Z, chunk=None):
        """Drift ``(Nq, n)`` and diffusion ``(Nq,)`` at arbitrary points ``Z``."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        Nq = Z.shape[0]
        b = np.empty((Nq, self.n))
        s2 = np.empty(Nq)
        chunk = chunk or max(1, _TILE_ELEMS // max(self.Zf.shape[0], 1))
        for a in range(0, Nq, chunk):
            zq = Z[a:a + chunk]
            rb, rs = cross_features(self.Zf, self.dens_f, zq, self.kparams, self.n)
            b[a:a + chunk] = np.einsum("f,ifq->qi", self.beta, rb)
            s2[a:a + chunk] = self.beta @ rs
            if len(self.eta):
                s2[a:a + chunk] += self.eta @ gram(self.Zc, zq, self.kparams)
        return b, s2

    def predict_derivs(self, Z):
        """Spatial derivatives: ``db[q, i, j] = d b^i / dx_j``, ``ds2[q, j]``,
        ``d2s2[q, j, k]``."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        n = self.n
        db = np.empty((Z.shape[0], n, n))
        ds2 = np.empty((Z.shape[0], n))
        d2s2 = np.empty((Z.shape[0], n, n))
        for j in range(n):
            rb, rs = cross_features(self.Zf, self.dens_f, Z, self.kparams, n, sup=(j,))
            db[:, :, j] = np.einsum("f,ifq->qi", self.beta, rb)
            ds2[:, j] = self.beta @ rs
            if len(self.eta):
                ds2[:, j] += self.eta @ _kernel_sup(self.Zc, Z, self.kparams, n, (j,))
            for k in range(n):
                _, rs2 = cross_features(self.Zf, self.dens_f, Z, self.kparams, n, sup=(j, k))
                d2s2[:, j, k] = self.beta @ rs2
                if len(self.eta):
                    d2s2[:, j, k] += self.eta @ _kernel_sup(self.Zc, Z, self.kparams, n, (j, k))
        return db, ds2, d2s2

    def evaluate_shared(self, t, X, v=None, chunk=None):
        """Evaluate at states ``X`` (shape ``(Q, n)``) that share one time and control.

        Algebraically identical to :meth:`predict`; the time/control factor of
        the isotropic kernel is folded into per-state weights first.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n, g = self.n, self.gamma
        tv = np.concatenate([[t], np.ravel(v) if v is not None else []])
        if tv.size != 1 + self.d:
            raise ValueError(f"expected {self.d} control coordinates, got {tv.size - 1}")
        other = np.concatenate([self.Zf[:, :1], self.Zf[:, 1 + n:]], axis=1)
        e = np.exp(-g * np.sum((other - tv) ** 2, axis=1))
        U = self._ux.shape[0]
        A = np.bincount(self._uinv, self._A * e, minlength=U)
        C = np.bincount(self._uinv, self._C * e, minlength=U)
        B = np.stack([np.bincount(self._uinv, self._B[:, i] * e, minlength=U) for i in range(n)], 1)
        live = (np.abs(A) + np.abs(C) + np.abs(B).sum(1)) > 0
        ux, A, B, C = self._ux[live], A[live], B[live], C[live]
        if len(self.eta):
            oc = np.concatenate([self.Zc[:, :1], self.Zc[:, 1 + n:]], axis=1)
            ec = self.eta * np.exp(-g * np.sum((oc - tv) ** 2, axis=1))
            E = np.bincount(self._cinv, ec, minlength=self._cx.shape[0])
            cx = self._cx[E != 0]
            E = E[E != 0]

        # every term is a weighted sum over states of K(u, q) times a polynomial
        # in x_q, so one kernel matrix and one product give all of them:
        #   b^i = 2g (S[A x_i] - x_i S[A]) - S[B_i]
        #   s2  = 2g^2 (S[A|x|^2] - 2 x.S[A x] + |x|^2 S[A]) - n g S[A]
        #         - 2g (S[B.x] - x.S[B]) + S[C]
        Wt = np.column_stack([A, A[:, None] * ux, A * np.sum(ux**2, axis=1), B,
                              np.sum(B * ux, axis=1), C])
        Q = X.shape[0]
        b = np.zeros((Q, n))
        s2 = np.zeros(Q)
        chunk = chunk or max(1, _TILE_ELEMS // max(ux.shape[0], 1))
        for a in range(0, Q, chunk):
            xq = X[a:a + chunk]
            S = _sqdist_kernel(ux, xq, g).T @ Wt  # (q, 2n + 4)
            SA, SAx, SAr = S[:, 0], S[:, 1:1 + n], S[:, 1 + n]
            SB, SBx, SC = S[:, 2 + n:2 + 2 * n], S[:, 2 + 2 * n], S[:, 3 + 2 * n]
            x2 = np.sum(xq**2, axis=1)
            b[a:a + chunk] = 2 * g * (SAx - xq * SA[:, None]) - SB
            s2[a:a + chunk] = (2 * g * g * (SAr - 2 * np.sum(xq * SAx, axis=1) + x2 * SA)
                               - n * g * SA - 2 * g * (SBx - np.sum(xq * SB, axis=1)) + SC)
            if len(self.eta) and len(E):
                s2[a:a + chunk] += E @ _sqdist_kernel(cx, xq, g)
        return b, s2


def _sqdist_kernel(U, X, g):
    r2 = np.zeros((U.shape[0], X.shape[0]))
    for i in range(U.shape[1]):
        r2 += np.subtract.outer(U[:, i], X[:, i]) ** 2
    return np.exp(-g * r2)


# --- fitted model ----------------------------------------------------------------

@dataclass(eq=False)
class FPModel:
    lam: float
    kparams: GaussianKernelParams
    train: FPTrainingSet
    gamma_dual: np.ndarray
    beta: np.ndarray
    eta: np.ndarray
    anchors: np.ndarray = None
    kappa: float = 0.0
    solver: object = field(default=None, repr=False)
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        feat = self.feature_idx
        self.field = CoefficientField(
            self.train.points[feat], self.train.dens.take(feat), self.beta,
            self.train.points[self.train.constraint_idx], self.eta, self.kparams, self.train.n)

    @property
    def n(self):
        return self.train.n

    @property
    def d(self):
        return self.train.d

    @property
    def feature_idx(self):
        return np.arange(self.train.N) if self.anchors is None else self.anchors

    @property
    def constrained(self):
        return bool(np.any(self.gamma_dual > 0))

    def predict(self, Z):
        return self.field.predict(Z)


def predict_coefficients(model, Z):
    """Drift ``(Nq, n)`` and scalar diffusion ``(Nq,)`` at points ``Z``."""
    field_ = model.field if isinstance(model, FPModel) else model
    return field_.predict(Z)


class _FullSolver:
    """Cached factorization of ``K~ + N lam I``."""

    kind = "full"

    def __init__(self, train, lam, kparams, tilde=None):
        t0 = time.perf_counter()
        N = train.N
        Kt = assemble_tilde_gram(train, kparams) if tilde is None else tilde.copy()
        self.assembly_time = time.perf_counter() - t0
        Kt[np.diag_indices(N)] += N * lam
        try:
            self.chol = JitteredCholesky(Kt, overwrite=True)
        except FactorizationError as exc:
            raise FPFitError(f"(K~ + N lam I) factorization failed: {exc}") from exc
        del Kt
        self.train, self.lam, self.kparams = train, lam, kparams
        self.beta_std = self.chol.solve(train.dens.dhat)

    def dual_block(self, W):
        """``A_WW`` and ``b_W`` of the dual restricted to constraint rows ``W``."""
        tr = self.train
        Zc = tr.points[W]
        _, Rs = cross_features(tr.points, tr.dens, Zc, self.kparams, tr.n)  # (N, |W|)
        Lr = linalg.solve_triangular(self.chol.factor, Rs, lower=True, check_finite=False)
        A = (gram(Zc, Zc, self.kparams) - Lr.T @ Lr) / self.lam
        b = 2.0 * (Rs.T @ self.beta_std)
        return 0.5 * (A + A.T), b, Rs

    def weights(self, W, gam_W, Rs):
        """``beta`` and per-constraint ``eta`` for multipliers ``gam_W`` on positions ``W``."""
        beta = self.beta_std.copy()
        eta = np.zeros(self.train.constraint_idx.size)
        if len(W):
            beta -= self.chol.solve(Rs @ gam_W) / self.lam
            eta[W] = gam_W / self.lam
        return beta, eta


class _NystromSolver:
    """Least-squares form of the Nystrom system

        alpha = (K~_nm^T K~_nm + N lam K~_mm)^{-1} (K~_mn d + R_m gamma)

    solved through the SVD of the stacked matrix ``[K~_nm; sqrt(N lam) K~_mm^{1/2}]``
    so that ``m = N`` reproduces the full estimator without squaring condition
    numbers.
    """

    kind = "nystrom"

    def __init__(self, train, lam, kparams, anchors):
        t0 = time.perf_counter()
        N = train.N
        Za = train.points[anchors]
        da = train.dens.take(anchors)
        Knm = tilde_gram(train.points, train.dens, Za, da, kparams, train.n)
        Kmm = Knm[anchors]
        Kmm = 0.5 * (Kmm + Kmm.T)
        self.assembly_time = time.perf_counter() - t0
        s, V = linalg.eigh(Kmm, check_finite=False)
        s = np.clip(s, 0.0, None)
        B = np.vstack([Knm, np.sqrt(N * lam) * (V * np.sqrt(s)).T])
        Ub, sv, Vt = linalg.svd(B, full_matrices=False, check_finite=False, lapack_driver="gesdd")
        keep = sv > sv[0] * max(B.shape) * np.finfo(float).eps if sv.size else sv > 0
        if not keep.any():
            raise FPFitError("reduced Nystrom system is numerically zero")
        self.U = Ub[:N, keep]
        self.sv = sv[keep]
        self.Vt = Vt[keep]
        self.train, self.lam, self.kparams, self.anchors = train, lam, kparams, anchors
        self.Za, self.da = Za, da
        self.alpha_std = self.Vt.T @ ((self.U.T @ train.dens.dhat) / self.sv)

    def dual_block(self, W):
        Zc = self.train.points[W]
        _, Rs = cross_features(self.Za, self.da, Zc, self.kparams, self.train.n)  # (m, |W|)
        G = (self.Vt @ Rs) / self.sv[:, None]
        A = G.T @ G
        b = 2.0 * (Rs.T @ self.alpha_std)
        return A, b, G

    def weights(self, W, gam_W, G):
        alpha = self.alpha_std.copy()
        if len(W):
            alpha += self.Vt.T @ ((G @ gam_W) / self.sv)
        return alpha, np.zeros(self.train.constraint_idx.size)


def _solve_with_constraints(solver, train, kappa, tol, max_iter, max_rounds=50):
    """Working-set dual solve: only constraint points that are violated enter the QP.

    Each round solves the restricted nonnegative QP by projected gradient, then
    re-checks ``sigma^2 >= kappa`` at every constraint point.  The loop ends when
    no point outside the working set is violated, at which point the restricted
    KKT conditions are the full ones (multipliers outside the set are zero).
    """
    I = train.constraint_idx
    W = np.array([], dtype=int)  # positions into I
    gam_W = np.zeros(0)
    aux = None
    iters = 0
    feas_tol = 0.1 * tol
    for rnd in range(max_rounds):
        beta, eta = solver.weights(W, gam_W, aux)
        _, s2 = _field_for(solver, train, beta, eta).predict(train.points[I])
        viol = np.setdiff1d(np.flatnonzero(s2 - kappa < -feas_tol), W)
        if viol.size == 0:
            gam = np.zeros(I.size)
            gam[W] = gam_W
            return beta, eta, gam, {"rounds": rnd, "working_set": int(len(W)),
                                    "iterations": iters}
        W = np.concatenate([W, viol])
        order = np.argsort(W)
        W = W[order]
        gam_W = np.concatenate([gam_W, np.zeros(viol.size)])[order]
        A, b, aux = solver.dual_block(I[W])
        try:
            res = solve_nonneg_qp(A, b - 2.0 * kappa, x0=gam_W, tol=tol, max_iter=max_iter)
        except DualNotConverged as exc:
            full = np.zeros(I.size)
            full[W] = exc.last
            raise DualNotConverged(str(exc), full, exc.residual, exc.iterations) from exc
        gam_W = res.x
        iters += res.iterations
    full = np.zeros(I.size)
    full[W] = gam_W
    raise DualNotConverged(f"working set did not stabilize in {max_rounds} rounds",
                           full, np.inf, iters)


def _field_for(solver, train, beta, eta):
    feat = np.arange(train.N) if solver.kind == "full" else solver.anchors
    return CoefficientField(train.points[feat], train.dens.take(feat), beta,
                            train.points[train.constraint_idx], eta, solver.kparams, train.n)


def _check_lam(lam):
    if not (np.isfinite(lam) and lam > 0):
        raise ValueError(f"lambda must be positive, got {lam}")


def fit_fp(train, lam, kparams, tilde=None):
    """Unconstrained ridge fit: ``beta = (K~ + N lam I)^{-1} d``.

    ``tilde`` optionally supplies a precomputed :func:`assemble_tilde_gram`
    (reused across a lambda grid); it is not modified.
    """
    _check_lam(lam)
    kparams = _kp(kparams)
    t0 = time.perf_counter()
    solver = _FullSolver(train, lam, kparams, tilde)
    info = {"fit_time": time.perf_counter() - t0, "assembly_time": solver.assembly_time,
            "jitter": solver.chol.jitter}
    zeros = np.zeros(train.constraint_idx.size)
    return FPModel(lam, kparams, train, zeros, solver.beta_std, zeros, solver=solver, info=info)


def fit_fp_constrained(train, lam, kparams, kappa=0.0, tol=DEFAULT_TOL,
                       max_iter=DEFAULT_MAX_ITER, tilde=None):
    """Ridge fit with ``sigma^2(z_i) >= kappa`` at every constraint point."""
    _check_lam(lam)
    if train.constraint_idx.size == 0:
        raise ValueError("constraint set is empty")
    kparams = _kp(kparams)
    t0 = time.perf_counter()
    solver = _FullSolver(train, lam, kparams, tilde)
    beta, eta, gam, stats = _solve_with_constraints(solver, train, kappa, tol, max_iter)
    info = {"fit_time": time.perf_counter() - t0, "assembly_time": solver.assembly_time,
            "jitter": solver.chol.jitter, **stats}
    return FPModel(lam, kparams, train, gam, beta, eta, kappa=kappa, solver=solver, info=info)


def fit_fp_nystrom(train, lam, kparams, anchors, constrained=True, kappa=0.0,
                   tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Nystrom fit with the representer restricted to ``anchors`` (indices into ``train``)."""
    _check_lam(lam)
    kparams = _kp(kparams)
    anchors = np.asarray(anchors, dtype=int).ravel()
    if anchors.size < 1 or anchors.size > train.N:
        raise ValueError(f"need 1 <= m <= N anchors, got {anchors.size}")
    if np.unique(anchors).size != anchors.size:
        raise ValueError("anchor indices must be distinct")
    if anchors.min() < 0 or anchors.max() >= train.N:
        raise ValueError("anchor index out of range")
    t0 = time.perf_counter()
    solver = _NystromSolver(train, lam, kparams, anchors)
    if constrained and train.constraint_idx.size:
        beta, eta, gam, stats = _solve_with_constraints(solver, train, kappa, tol, max_iter)
    else:
        beta, eta, gam, stats = solver.alpha_std, np.zeros(train.constraint_idx.size), \
            np.zeros(train.constraint_idx.size), {}
    info = {"fit_time": time.perf_counter() - t0, "assembly_time": solver.assembly_time, **stats}
    return FPModel(lam, kparams, train, gam, beta, eta, anchors=anchors, kappa=kappa,
                   solver=solver, info=info)


def model_from_dual(train, lam, kparams, gamma_dual, anchors=None, kappa=0.0):
    """Rebuild a fitted model from its dual multipliers (used when loading)."""
    _check_lam(lam)
    kparams = _kp(kparams)
    gamma_dual = np.asarray(gamma_dual, dtype=float)
    if gamma_dual.shape != train.constraint_idx.shape or np.any(gamma_dual < 0):
        raise ValueError("dual vector must be nonnegative and aligned with the constraint set")
    if anchors is None:
        solver = _FullSolver(train, lam, kparams)
    else:
        anchors = np.asarray(anchors, dtype=int)
        solver = _NystromSolver(train, lam, kparams, anchors)
    W = np.flatnonzero(gamma_dual > 0)
    aux = solver.dual_block(train.constraint_idx[W])[2] if len(W) else None
    beta, eta = solver.weights(W, gamma_dual[W], aux)
    return FPModel(lam, kparams, train, gamma_dual, beta, eta, anchors=anchors, kappa=kappa,
                   solver=solver, info={"reloaded": 1})


def _kp(kparams):
    return kparams if isinstance(kparams, GaussianKernelParams) else GaussianKernelParams(float(kparams))


# --- residuals ---------------------------------------------------------------------

def fp_operator(dens, b, db, s2, ds2, d2s2):
    """``(L^*) p = -sum_i d_i(b^i p) + 1/2 sum_i d_ii(sigma^2 p)`` from pointwise values.

    ``db[q, i, j] = d b^i / dx_j``; ``ds2[q, j]``, ``d2s2[q, j, k]`` are the
    derivatives of the scalar diffusion.
    """
    P, Pi, Pij = dens.P, dens.Pi, dens.Pij
    div = np.einsum("qii->q", db) * P + np.einsum("qi,qi->q", b, Pi)
    lap = (np.einsum("qii->q", d2s2) * P + 2.0 * np.einsum("qi,qi->q", ds2, Pi)
           + s2 * np.einsum("qii->q", Pij))
    return -div + 0.5 * lap


class ValidationCache:
    """Cross Gram ``<phi~(z_val), phi~(z_f)>`` reused across models sharing
    kernel, feature points and validation set."""

    def __init__(self, valset, train, kparams, feature_idx=None):
        kparams = _kp(kparams)
        feat = np.arange(train.N) if feature_idx is None else np.asarray(feature_idx)
        self.valset, self.kparams = valset, kparams
        self.Zf = train.points[feat]
        self.cross = tilde_gram(valset.points, valset.dens, self.Zf,
                                train.dens.take(feat), kparams, valset.n)

    def matches(self, model):
        f = model.field
        return (model.kparams.gamma == self.kparams.gamma and f.Zf.shape == self.Zf.shape
                and np.array_equal(f.Zf, self.Zf))


def fp_residual(model, valset, cache=None):
    """``dp/dt - (L^*) p`` at the validation points, in feature form."""
    fld = model.field
    Zv = valset.points
    if cache is not None and cache.valset is valset and cache.matches(model):
        Kt = cache.cross
    else:
        Kt = tilde_gram(Zv, valset.dens, fld.Zf, fld.dens_f, model.kparams, valset.n)
    gen = Kt @ fld.beta
    if len(fld.eta):
        # <U* phi(z_c), phi~(z)> = r^s(z, z_c)
        _, rs = cross_features(Zv, valset.dens, fld.Zc, model.kparams, valset.n)
        gen += rs @ fld.eta
    return valset.dens.dhat - gen


def fp_residual_mse(model, valset, cache=None):
    r = fp_residual(model, valset, cache)
    return float(np.mean(r**2))


def zero_model_mse(valset):
    return float(np.mean(valset.dens.dhat**2))


def train_mse(model):
    return fp_residual_mse(model, model.train)
