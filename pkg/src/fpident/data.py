"""Sample-path containers."""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class PathDataset:
    """``Q`` sample paths observed at ``M`` common times in ``n`` dimensions.

    ``paths`` has shape ``(Q, M, n)``.  ``diverged`` flags paths whose
    simulation produced a non-finite state; such paths are frozen at their last
    finite value so the array itself stays finite.
    """

    times: np.ndarray
    paths: np.ndarray
    meta: dict = field(default_factory=dict)
    diverged: np.ndarray = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).ravel()
        paths = np.asarray(self.paths, dtype=float)
        if paths.ndim == 2:
            paths = paths[:, :, None]
        if paths.ndim != 3:
            raise ValueError(f"paths must have shape (Q, M, n), got {paths.shape}")
        Q, M, n = paths.shape
        if Q < 1 or M < 1 or n < 1:
            raise ValueError(f"empty dataset with shape {paths.shape}")
        if times.shape != (M,):
            raise ValueError(f"times has {times.size} entries but paths have M={M}")
        if M > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("times must be strictly increasing")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(paths))):
            raise ValueError("dataset contains NaN or infinite values")
        diverged = (np.zeros(Q, dtype=bool) if self.diverged is None
                    else np.asarray(self.diverged, dtype=bool).ravel())
        if diverged.shape != (Q,):
            raise ValueError("diverged flags must have one entry per path")
        times.setflags(write=False)
        paths.setflags(write=False)
        diverged.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "paths", paths)
        object.__setattr__(self, "diverged", diverged)
        object.__setattr__(self, "meta", dict(self.meta))

    @property
    def Q(self):
        return self.paths.shape[0]

    @property
    def M(self):
        return self.paths.shape[1]

    @property
    def n(self):
        return self.paths.shape[2]

    @property
    def T(self):
        return float(self.times[-1])

    def subset(self, idx):
        idx = np.asarray(idx)
        return PathDataset(self.times, self.paths[idx], self.meta, self.diverged[idx])

    def points(self):
        """All observed ``(t, x)`` pairs as an ``(Q*M, 1+n)`` array."""
        t = np.broadcast_to(self.times[None, :, None], (self.Q, self.M, 1))
        return np.concatenate([t, self.paths], axis=2).reshape(-1, 1 + self.n)
