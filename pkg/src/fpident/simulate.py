"""Euler-Maruyama simulation from true or estimated coefficients."""

from dataclasses import dataclass

import numpy as np

from .data import PathDataset
from .processes import ProcessDef

SIGMA2_FLOOR = 1e-8


class SimulationDiverged(RuntimeError):
    def __init__(self, message, n_diverged, Q):
        super().__init__(message)
        self.n_diverged = n_diverged
        self.Q = Q


@dataclass(frozen=True)
class SimConfig:
    """``M`` saved times on ``linspace(0, T, M)``, ``substeps`` Euler steps between
    saves, and a Gaussian initial law ``N(init_mean, init_var * I)``."""

    Q: int
    M: int
    T: float
    init_mean: tuple = (0.0,)
    init_var: float = 0.0
    substeps: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.Q < 1 or self.M < 1 or self.substeps < 1:
            raise ValueError("Q, M and substeps must be >= 1")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.init_var < 0:
            raise ValueError("init_var must be nonnegative")
        object.__setattr__(self, "init_mean", tuple(float(v) for v in np.ravel(self.init_mean)))

    @property
    def n(self):
        return len(self.init_mean)

    def times(self):
        return np.linspace(0.0, self.T, self.M)

    def replace(self, **kw):
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(kw)
        return SimConfig(**d)


def config_for(proc, Q, M, substeps=10, seed=0, init_var=None):
    mean, var = proc.init_distribution()
    return SimConfig(Q=Q, M=M, T=proc.T, init_mean=tuple(mean),
                     init_var=var if init_var is None else init_var,
                     substeps=substeps, seed=seed)


def simulate(drift_diffusion, cfg, u=None, meta=None):
    """Integrate ``dX = b dt + s dW`` with Euler-Maruyama.

    ``drift_diffusion(t, X, u)`` returns the drift ``(Q, n)`` and a scalar
    diffusion amplitude per path (shape ``(Q,)`` or scalar).  A
    :class:`ProcessDef` may be passed directly.
    """
    if isinstance(drift_diffusion, ProcessDef):
        proc = drift_diffusion
        fn = proc.coefficients
        meta = {"process": proc.tag or proc.kind, **(meta or {})}
    else:
        fn = drift_diffusion
    rng = np.random.default_rng(cfg.seed)
    n, Q = cfg.n, cfg.Q
    times = cfg.times()
    X = np.asarray(cfg.init_mean)[None, :] + np.sqrt(cfg.init_var) * rng.standard_normal((Q, n))
    out = np.empty((Q, cfg.M, n))
    out[:, 0] = X
    alive = np.ones(Q, dtype=bool)
    for m in range(1, cfg.M):
        t0 = times[m - 1]
        dt = (times[m] - t0) / cfg.substeps
        sq = np.sqrt(dt)
        for s in range(cfg.substeps):
            t = t0 + s * dt
            noise = rng.standard_normal((Q, n))
            b, sig = fn(t, X, u)
            step = b * dt + np.reshape(sig, (-1, 1)) * sq * noise
            Xn = X + step
            bad = alive & ~np.all(np.isfinite(Xn), axis=1)
            if bad.any():
                alive &= ~bad
                if (~alive).sum() > Q / 2:
                    raise SimulationDiverged(
                        f"{(~alive).sum()} of {Q} paths diverged by t={t:.3g}", int((~alive).sum()), Q)
            X = np.where(alive[:, None], Xn, X)
        out[:, m] = X
    info = {"seed": cfg.seed, "Q": Q, "M": cfg.M, "substeps": cfg.substeps, **(meta or {})}
    if u is not None and hasattr(u, "to_record"):
        info["control"] = u.to_record()
    return PathDataset(times, out, info, ~alive)


def simulate_process(proc, Q, M, substeps=10, seed=0, u=None, init_var=None):
    return simulate(proc, config_for(proc, Q, M, substeps, seed, init_var), u)


def estimated_evaluator(field, sigma2_floor=SIGMA2_FLOOR):
    """Wrap a fitted coefficient field as a ``(t, X, u) -> (b, s)`` evaluator."""

    def fn(t, X, u=None):
        v = None
        if field.d:
            if u is None:
                raise ValueError("controlled model requires a control")
            v = np.atleast_1d(u(t) if callable(u) else u)
        b, s2 = field.evaluate_shared(t, X, v)
        return b, np.sqrt(np.maximum(s2, sigma2_floor))
    return fn


def simulate_estimated(field, cfg, u=None, sigma2_floor=SIGMA2_FLOOR):
    """Sample paths from estimated coefficients; ``sigma^2`` is floored at ``sigma2_floor``."""
    return simulate(estimated_evaluator(field, sigma2_floor), cfg, u, meta={"process": "estimated"})
