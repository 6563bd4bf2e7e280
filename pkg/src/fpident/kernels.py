"""Gaussian kernels on (t, x[, v]) points and their state-derivative Gram matrices.

Points are rows of a 2-D array laid out as ``(t, x_1..x_n, v_1..v_d)``.  A
single isotropic ``gamma`` applies to every coordinate, but derivatives are
only ever taken with respect to the state coordinates ``x``.

Derivative blocks follow the sub/superscript convention: subscripts are
derivatives in the first argument, superscripts in the second, so
``block((i,), (j,))`` is ``d^2 k(z, z') / dx_i dx'_j`` evaluated on all pairs.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GaussianKernelParams:
    """``k(z, z') = exp(-gamma * ||z - z'||^2)``."""

    gamma: float

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError(f"gamma must be positive and finite, got {self.gamma}")


def _as_points(Z):
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[None, :]
    if Z.ndim != 2:
        raise ValueError(f"points must be a 2-D array, got shape {Z.shape}")
    if not np.all(np.isfinite(Z)):
        raise ValueError("points contain non-finite coordinates")
    return Z


def _sq_dists_exact(Z, Zp):
    # coordinate-wise accumulation; avoids the cancellation of the dot-product form
    d2 = np.zeros((Z.shape[0], Zp.shape[0]))
    for c in range(Z.shape[1]):
        diff = Z[:, c, None] - Zp[None, :, c]
        d2 += diff * diff
    return d2


def gram(Z, Zp, params):
    """Gaussian Gram matrix ``exp(-gamma ||z_p - z'_q||^2)``."""
    Z, Zp = _as_points(Z), _as_points(Zp)
    if Z.shape[1] != Zp.shape[1]:
        raise ValueError(f"dimension mismatch: {Z.shape[1]} vs {Zp.shape[1]}")
    gamma = params.gamma if isinstance(params, GaussianKernelParams) else float(params)
    return np.exp(-gamma * _sq_dists_exact(Z, Zp))


def temporal_gram(T1, T2, nu):
    """``exp(-nu (t - t')^2)`` on two time vectors."""
    if not nu > 0:
        raise ValueError(f"nu must be positive, got {nu}")
    T1 = np.asarray(T1, dtype=float).ravel()
    T2 = np.asarray(T2, dtype=float).ravel()
    return np.exp(-nu * (T1[:, None] - T2[None, :]) ** 2)


def temporal_gram_dt(T1, T2, nu):
    """Derivative of :func:`temporal_gram` in its first argument."""
    T1 = np.asarray(T1, dtype=float).ravel()
    T2 = np.asarray(T2, dtype=float).ravel()
    D = T1[:, None] - T2[None, :]
    return -2.0 * nu * D * np.exp(-nu * D**2)


class DerivGramSet:
    """Lazily materialized derivative Gram blocks ``K_{sub}^{sup}``.

    Blocks are produced by the recursions

        K_i        = -2g D_i * K
        K^i        = -K_i
        K_ij       = -2g (D_j * K_i + d_ij K)
        K^ij       = K_ij
        K_i^j      = -K_ij
        K_k^ij     = -2g (D_j * K_ik + d_jk K_i + d_ij K_k)
        K_ij^k     = -K_i^jk
        K_kl^ij    = -2g (-D_j * K_kl^i + d_jl K_ik + d_jk K_il + d_ij K_kl)

    with ``D_i = Z[:, i] - Z'[:, i]`` (state coordinate ``i``) and ``*`` the
    Hadamard product.  Index tuples are 0-based state indices; mixed partials
    commute, so tuples are sorted before lookup.
    """

    def __init__(self, Z, Zp, params, n_state, state_offset=1, max_order=4):
        if max_order not in (1, 2, 4):
            raise ValueError(f"max_order must be 1, 2 or 4, got {max_order}")
        self.Z = _as_points(Z)
        self.Zp = _as_points(Zp)
        if self.Z.shape[1] != self.Zp.shape[1]:
            raise ValueError(f"dimension mismatch: {self.Z.shape[1]} vs {self.Zp.shape[1]}")
        if state_offset + n_state > self.Z.shape[1]:
            raise ValueError("state coordinates exceed point dimension")
        self.gamma = params.gamma if isinstance(params, GaussianKernelParams) else float(params)
        self.n = n_state
        self.offset = state_offset
        self.max_order = max_order
        self._D = {}
        self._cache = {}
        self._cache[((), ())] = gram(self.Z, self.Zp, self.gamma)

    @property
    def K(self):
        return self._cache[((), ())]

    def D(self, i):
        if i not in self._D:
            c = self.offset + i
            self._D[i] = self.Z[:, c, None] - self.Zp[None, :, c]
        return self._D[i]

    def block(self, sub=(), sup=()):
        sub = tuple(sorted(sub))
        sup = tuple(sorted(sup))
        for i in sub + sup:
            if not 0 <= i < self.n:
                raise IndexError(f"state index {i} out of range for n={self.n}")
        if len(sub) + len(sup) > self.max_order:
            raise ValueError(f"order {len(sub) + len(sup)} exceeds max_order={self.max_order}")
        key = (sub, sup)
        if key not in self._cache:
            self._cache[key] = self._compute(sub, sup)
        return self._cache[key]

    __getitem__ = block

    def _compute(self, sub, sup):
        g2 = -2.0 * self.gamma
        K, blk, D = self.K, self.block, self.D
        d = lambda a, b: 1.0 if a == b else 0.0  # noqa: E731
        ns, np_ = len(sub), len(sup)

        if (ns, np_) == (1, 0):
            (i,) = sub
            return g2 * D(i) * K
        if (ns, np_) == (0, 1):
            return -blk(sup)
        if (ns, np_) == (2, 0):
            i, j = sub
            out = D(j) * blk((i,))
            if i == j:
                out = out + K
            return g2 * out
        if (ns, np_) == (0, 2):
            return blk(sup)
        if (ns, np_) == (1, 1):
            return -blk(sub + sup)
        if (ns, np_) == (1, 2):
            (k,) = sub
            i, j = sup
            out = D(j) * blk(tuple(sorted((i, k))))
            if j == k:
                out = out + blk((i,))
            if i == j:
                out = out + blk((k,))
            return g2 * out
        if (ns, np_) == (2, 1):
            i, j = sub
            (k,) = sup
            return -blk((i,), (j, k))
        if (ns, np_) == (2, 2):
            k, l = sub
            i, j = sup
            out = -D(j) * blk((k, l), (i,))
            for coef, s in ((d(j, l), (i, k)), (d(j, k), (i, l)), (d(i, j), (k, l))):
                if coef:
                    out = out + blk(tuple(sorted(s)))
            return g2 * out
        raise NotImplementedError(f"derivative block K_{sub}^{sup} is not used by FP matching")


def deriv_grams(Z, Zp, params, n_state, max_order=4, state_offset=1, eager=True):
    """Build a :class:`DerivGramSet`; with ``eager`` every block up to ``max_order``
    that Fokker-Planck matching consumes is materialized."""
    S = DerivGramSet(Z, Zp, params, n_state, state_offset=state_offset, max_order=max_order)
    if eager:
        n = n_state
        for i in range(n):
            S.block((i,))
            S.block((), (i,))
            if max_order >= 2:
                for j in range(n):
                    S.block((i, j))
                    S.block((), (i, j))
                    S.block((i,), (j,))
            if max_order >= 4:
                for j in range(n):
                    S.block((i, i), (j,))
                    S.block((i,), (j, j))
                    S.block((i, i), (j, j))
    return S
