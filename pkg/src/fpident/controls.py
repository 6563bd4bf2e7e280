"""Open-loop control families ``u: [0, T] -> R^d``."""

from dataclasses import dataclass

import numpy as np

FAMILIES = ("two_step", "sinusoidal", "constant")


@dataclass(frozen=True)
class ControlSpec:
    """A member of a parametric control family.

    two_step:   params = (u0, u1, t1);  u(t) = u0 for t < t1, u1 otherwise
    sinusoidal: params = (a,);          u(t) = a sin(pi t / 10)
    constant:   params = (c,);          u(t) = c
    """

    family: str
    params: tuple

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown control family {self.family!r}")
        params = tuple(float(p) for p in np.ravel(self.params))
        expected = {"two_step": 3, "sinusoidal": 1, "constant": 1}[self.family]
        if len(params) != expected:
            raise ValueError(f"{self.family} control takes {expected} parameters, got {len(params)}")
        object.__setattr__(self, "params", params)

    @property
    def d(self):
        return 1

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.family == "two_step":
            u0, u1, t1 = self.params
            return np.where(t < t1, u0, u1)
        if self.family == "sinusoidal":
            return self.params[0] * np.sin(np.pi * t / 10.0)
        return np.full_like(t, self.params[0])

    def to_record(self):
        return {"family": self.family, "params": list(self.params)}

    @classmethod
    def from_record(cls, rec):
        return cls(rec["family"], tuple(rec["params"]))


def two_step(u0, u1, t1):
    return ControlSpec("two_step", (u0, u1, t1))


def sinusoidal(a):
    return ControlSpec("sinusoidal", (a,))


def constant(c):
    return ControlSpec("constant", (c,))


# sampling ranges of the reference experiments
TWO_STEP_RANGES = {"u0": (-2.0, 2.0), "u1": (-2.0, 2.0), "t1": (3.0, 7.0)}
SINUSOIDAL_RANGES = {"a": (-1.2, 1.2)}


def sample_controls(family, ranges, K, seed):
    """Draw ``K`` i.i.d. controls with every parameter uniform on its range."""
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    names = {"two_step": ("u0", "u1", "t1"), "sinusoidal": ("a",), "constant": ("c",)}
    if family not in names:
        raise ValueError(f"unknown control family {family!r}")
    bounds = []
    for name in names[family]:
        if name not in ranges:
            raise ValueError(f"missing range for {name!r}")
        lo, hi = (float(v) for v in ranges[name])
        if not (np.isfinite(lo) and np.isfinite(hi)) or hi < lo:
            raise ValueError(f"empty range for {name!r}: [{lo}, {hi}]")
        bounds.append((lo, hi))
    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    draws = lo + (hi - lo) * rng.random((K, len(bounds)))
    return [ControlSpec(family, tuple(row)) for row in draws]
