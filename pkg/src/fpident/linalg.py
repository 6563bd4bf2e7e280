"""Symmetric positive-definite factorizations with jitter escalation."""

import logging

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

logger = logging.getLogger(__name__)

JITTER_START = 1e-10
JITTER_MAX = 1e-4


class FactorizationError(np.linalg.LinAlgError):
    """Raised when a matrix stays non-PD even at the largest jitter."""


def _restore_lower(F, block=512):
    # dpotrf(lower) only touches the lower triangle; rebuild it from the upper one
    n = F.shape[0]
    for j0 in range(0, n, block):
        j1 = min(n, j0 + block)
        F[j1:, j0:j1] = F[j0:j1, j1:].T
        sub = F[j0:j1, j0:j1]
        il = np.tril_indices(j1 - j0, -1)
        sub[il] = sub.T[il]


class JitteredCholesky:
    """Lower Cholesky factor of ``A + jitter * mean(diag(A)) * I``.

    The first attempt uses no jitter.  On failure the relative jitter starts at
    ``JITTER_START`` and grows tenfold up to ``JITTER_MAX``.  ``A`` must be
    symmetric.  With ``overwrite=True`` the input buffer is reused, which
    matters for the N x N Fokker-Planck Gram at N ~ 10^4.
    """

    def __init__(self, A, overwrite=False):
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {A.shape}")
        self.n = A.shape[0]
        if self.n == 0:
            raise ValueError("cannot factorize an empty matrix")
        if not np.all(np.isfinite(np.diag(A))):
            raise FactorizationError("matrix has non-finite diagonal")
        scale = float(np.mean(np.diag(A)))
        if not scale > 0:
            scale = 1.0

        if overwrite and (A.flags.c_contiguous or A.flags.f_contiguous) and A.flags.writeable:
            base = A
        else:
            base = np.array(A, order="C", copy=True)
        # the transpose of a C-ordered symmetric matrix is an F-ordered view of it
        F = base.T if base.flags.c_contiguous else base
        diag = np.diag(F).copy()

        rel = 0.0
        while True:
            np.fill_diagonal(F, diag + rel * scale)
            c, info = lapack.dpotrf(F, lower=1, clean=0, overwrite_a=1)
            if info == 0:
                break
            if info < 0:
                raise FactorizationError(f"dpotrf: illegal argument {-info}")
            _restore_lower(F)
            rel = JITTER_START if rel == 0.0 else rel * 10.0
            if rel > JITTER_MAX * (1 + 1e-9):
                raise FactorizationError(
                    f"{self.n} x {self.n} matrix not positive definite "
                    f"even with relative jitter {JITTER_MAX:g}")
        # only the lower triangle of `factor` is meaningful
        self.factor = c
        self.jitter = rel * scale
        if rel > 0:
            logger.debug("added jitter %.3e to %d x %d matrix", self.jitter, self.n, self.n)

    def solve(self, B):
        return linalg.cho_solve((self.factor, True), B, check_finite=False)

    def inverse(self):
        return self.solve(np.eye(self.n))

    def logdet(self):
        return 2.0 * float(np.sum(np.log(np.diag(self.factor))))
