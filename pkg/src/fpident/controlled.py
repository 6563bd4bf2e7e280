"""Controlled SDE estimation over points ``z = (t, x, u_k(t))``.

Each training control gets its own density model (shared hyperparameters);
the Fokker-Planck training sets of all controls are stacked, with the control
value appended as an extra kernel coordinate, and fitted jointly.
"""

from dataclasses import dataclass, field

import numpy as np

from . import fp
from .controls import ControlSpec
from .data import PathDataset
from .density import DensityEvaluation, DensityFitError, fit_density, predict_density
from .simulate import SimConfig, simulate


def derive_seeds(seed, k):
    """``k`` independent integer seeds from one root seed."""
    return [int(s.generate_state(1, dtype=np.uint32)[0])
            for s in np.random.SeedSequence(seed).spawn(k)]


@dataclass(frozen=True, eq=False)
class ControlledDataset:
    controls: tuple
    per_control: tuple

    def __post_init__(self):
        controls = tuple(self.controls)
        per = tuple(self.per_control)
        if len(controls) < 1:
            raise ValueError("need at least one control")
        if len(controls) != len(per):
            raise ValueError(f"{len(controls)} controls but {len(per)} datasets")
        n, M = per[0].n, per[0].M
        for k, d in enumerate(per):
            if d.n != n or d.M != M:
                raise ValueError(f"dataset {k} has (M, n)=({d.M}, {d.n}), expected ({M}, {n})")
        object.__setattr__(self, "controls", controls)
        object.__setattr__(self, "per_control", per)

    @property
    def K(self):
        return len(self.controls)

    @property
    def n(self):
        return self.per_control[0].n


def generate_controlled_dataset(proc, controls, cfg, seed=None):
    """Simulate ``cfg.Q`` paths of ``proc`` under each control with derived seeds."""
    seeds = derive_seeds(cfg.seed if seed is None else seed, len(controls))
    per = [simulate(proc, cfg.replace(seed=s), u) for s, u in zip(seeds, controls)]
    return ControlledDataset(tuple(controls), tuple(per))


def fit_controlled_density(data, nu, mu):
    models = []
    for k, d in enumerate(data.per_control):
        try:
            models.append(fit_density(d, nu, mu))
        except DensityFitError as exc:
            raise DensityFitError(f"control {k}: {exc}") from exc
    return models


# --- FP point samplers ------------------------------------------------------------

@dataclass(frozen=True)
class GridSampler:
    """Product set of ``n_times`` uniform times and ``n_positions`` uniform states.

    ``x_range=None`` uses each control's observed state range, padded by
    ``pad`` (quantiles ``q`` and ``1-q`` of the training states).
    """

    n_times: int
    n_positions: int
    t_range: tuple = None
    x_range: tuple = None
    pad: float = 0.25
    q: float = 0.005
    seed: int = 0

    def __call__(self, k, control, data, density_model):
        rng = np.random.default_rng([self.seed, k])
        lo_t, hi_t = self.t_range if self.t_range is not None else (data.times[0], data.times[-1])
        ts = rng.uniform(lo_t, hi_t, self.n_times)
        if self.x_range is not None:
            lo, hi = (np.broadcast_to(np.asarray(v, dtype=float), (data.n,)) for v in self.x_range)
        else:
            flat = data.paths.reshape(-1, data.n)
            lo = np.quantile(flat, self.q, axis=0) - self.pad
            hi = np.quantile(flat, 1 - self.q, axis=0) + self.pad
        xs = lo + (hi - lo) * rng.random((self.n_positions, data.n))
        return np.column_stack([np.repeat(ts, self.n_positions), np.tile(xs, (self.n_times, 1))])


@dataclass(frozen=True)
class PathSampler:
    """``n_pairs`` (t, x) pairs drawn from ``n_paths`` auxiliary paths of ``proc``
    started from a wide initial law, one fresh set per control."""

    proc: object
    n_pairs: int
    n_paths: int
    init_var: float
    substeps: int = 10
    seed: int = 0

    def __call__(self, k, control, data, density_model):
        (aux_seed, pick_seed) = derive_seeds([self.seed, k], 2)
        cfg = SimConfig(Q=self.n_paths, M=data.M, T=float(data.times[-1]),
                        init_mean=tuple(self.proc.init_distribution()[0]),
                        init_var=self.init_var, substeps=self.substeps, seed=aux_seed)
        aux = simulate(self.proc, cfg, control)
        pts = aux.points()
        rng = np.random.default_rng(pick_seed)
        idx = rng.choice(pts.shape[0], size=self.n_pairs, replace=self.n_pairs > pts.shape[0])
        return pts[idx]


@dataclass(frozen=True)
class RegularGridSampler:
    """Uniform time grid times a regular position lattice (``n_positions`` must
    be a perfect ``n``-th power)."""

    n_times: int
    n_positions: int
    t_range: tuple
    x_range: tuple

    def __call__(self, k, control, data, density_model):
        n = data.n
        side = int(round(self.n_positions ** (1.0 / n)))
        if side ** n != self.n_positions:
            raise ValueError(f"{self.n_positions} positions do not form a {n}-D lattice")
        lo, hi = (np.broadcast_to(np.asarray(v, dtype=float), (n,)) for v in self.x_range)
        axes = [np.linspace(lo[i], hi[i], side) for i in range(n)]
        xs = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        ts = np.linspace(*self.t_range, self.n_times)
        return np.column_stack([np.repeat(ts, xs.shape[0]), np.tile(xs, (self.n_times, 1))])


@dataclass(frozen=True)
class PathStateSampler:
    """``n`` distinct observed ``(t, x)`` pairs drawn from the training paths.

    Samplers sharing a seed walk the same random permutation, so a validation
    sampler with ``start=N`` never repeats the first ``N`` training picks.
    """

    n: int
    seed: int = 0
    start: int = 0

    def __call__(self, k, control, data, density_model):
        pts = data.points()
        if self.start + self.n > pts.shape[0]:
            raise ValueError(f"cannot draw {self.start + self.n} states from "
                             f"{pts.shape[0]} observations")
        perm = np.random.default_rng([self.seed, k]).permutation(pts.shape[0])
        return pts[np.sort(perm[self.start:self.start + self.n])]


def build_controlled_fp_set(data, density_models, sampler, constraint_idx=None):
    """Stack per-control FP points ``(t, x, u_k(t))`` with densities from model ``k``."""
    if len(density_models) != data.K:
        raise ValueError(f"{len(density_models)} density models for {data.K} controls")
    Zs, evals, src = [], [], []
    for k, (u, d, dm) in enumerate(zip(data.controls, data.per_control, density_models)):
        pts = np.asarray(sampler(k, u, d, dm), dtype=float)
        T = float(d.times[-1])
        if np.any(pts[:, 0] < d.times[0]) or np.any(pts[:, 0] > T):
            raise ValueError(f"sampler produced times outside [0, {T}] for control {k}")
        v = np.reshape(np.asarray(u(pts[:, 0]), dtype=float), (pts.shape[0], -1))
        Zs.append(np.column_stack([pts, v]))
        evals.append(predict_density(dm, pts[:, 0], pts[:, 1:], with_derivs=True))
        src.append(np.full(pts.shape[0], k))
    return fp.FPTrainingSet(np.vstack(Zs), DensityEvaluation.concatenate(evals), data.n,
                            constraint_idx, np.concatenate(src))


@dataclass(eq=False)
class ControlledFPModel:
    fp_model: fp.FPModel
    controls: tuple = ()
    info: dict = field(default_factory=dict)

    @property
    def field(self):
        return self.fp_model.field

    @property
    def d(self):
        return self.fp_model.d


def fit_controlled_fp(train, lam, kparams, controls=(), constrained=True, anchors=None):
    if anchors is not None:
        model = fp.fit_fp_nystrom(train, lam, kparams, anchors, constrained=constrained)
    elif constrained:
        model = fp.fit_fp_constrained(train, lam, kparams)
    else:
        model = fp.fit_fp(train, lam, kparams)
    return ControlledFPModel(model, tuple(controls), {"provenance": "stacked per-control FP sets"})


def predict_controlled(model, t, x, u):
    """``(b, sigma^2)`` at ``(t, x, u(t))``; ``t`` scalar or per-row, ``x`` ``(q, n)``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],))
    v = np.asarray(u(t) if callable(u) else np.broadcast_to(u, t.shape), dtype=float)
    v = v.reshape(x.shape[0], -1)
    Z = np.column_stack([t, x, v])
    return model.field.predict(Z)


def uncontrolled_as_controlled(data: PathDataset, control: ControlSpec):
    return ControlledDataset((control,), (data,))
