"""Reference SDEs used as data generators and analytic oracles.

Every process has uniform scalar diffusion: ``dX = b dt + sigma dW`` with
``sigma`` a scalar field times the identity.
"""

from dataclasses import dataclass, field

import numpy as np

from .controls import ControlSpec

KINDS = ("OU", "ControlledOU", "Dubins", "ControlledDubins", "FES")
CONTROLLED = ("ControlledOU", "ControlledDubins")


@dataclass(frozen=True)
class ProcessDef:
    """A reference SDE.

    ``params`` by kind:

    OU:               theta, mu, sigma, mu0, sigma0_sq
    ControlledOU:     theta, sigma, mu0, sigma0_sq
    Dubins:           v, theta_amp, sigma, init_mean, init_var
    ControlledDubins: v, sigma, init_mean, init_var
    FES:              centers_t (nb,), centers_x (nb, n), b_weights (nb, n),
                      s_weights (ns,), gamma, init_mean, init_var
    """

    kind: str
    params: dict
    T: float
    n: int = 1
    tag: str = field(default="", compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown process kind {self.kind!r}")
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        p = self.params
        if "sigma" in p and not p["sigma"] > 0:
            raise ValueError("sigma must be positive")
        if self.kind in ("OU", "ControlledOU") and not p["theta"] > 0:
            raise ValueError("OU theta must be positive")

    @property
    def controlled(self):
        return self.kind in CONTROLLED

    def init_distribution(self):
        """Mean vector and scalar variance of the Gaussian initial law."""
        p = self.params
        if self.kind in ("OU", "ControlledOU"):
            return np.array([p["mu0"]], dtype=float), float(p["sigma0_sq"])
        return np.broadcast_to(np.asarray(p["init_mean"], dtype=float), (self.n,)).copy(), \
            float(p["init_var"])

    def coefficients(self, t, X, u=None):
        """Drift ``(Q, n)`` and scalar diffusion amplitude ``(Q,)`` at states ``X``."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if self.controlled:
            if u is None:
                raise ValueError(f"{self.kind} requires a control")
            v = float(u(t)) if isinstance(u, ControlSpec) else float(u)
        p = self.params
        Q = X.shape[0]
        if self.kind == "OU":
            b = p["theta"] * (p["mu"] - X)
            s = np.full(Q, p["sigma"])
        elif self.kind == "ControlledOU":
            b = p["theta"] * (v - X)
            s = np.full(Q, p["sigma"])
        elif self.kind in ("Dubins", "ControlledDubins"):
            ang = v if self.kind == "ControlledDubins" else p["theta_amp"] * np.sin(np.pi * t / 10.0)
            b = np.broadcast_to(p["v"] * np.array([np.cos(ang), np.sin(ang)]), (Q, 2)).copy()
            s = np.full(Q, p["sigma"])
        else:
            w = _fes_weights(p, t, X)  # (Q, nb)
            b = w @ np.asarray(p["b_weights"], dtype=float)
            ns = len(p["s_weights"])
            s = np.maximum(w[:, :ns] @ np.asarray(p["s_weights"], dtype=float), FES_SIGMA_FLOOR)
        return b, s

    def to_record(self):
        return {"kind": self.kind, "T": self.T, "n": self.n, "tag": self.tag,
                "params": {k: np.asarray(v).tolist() for k, v in self.params.items()}}

    @classmethod
    def from_record(cls, rec):
        params = {k: (float(v) if np.ndim(v) == 0 else np.asarray(v, dtype=float))
                  for k, v in rec["params"].items()}
        return cls(rec["kind"], params, float(rec["T"]), int(rec.get("n", 1)), rec.get("tag", ""))


def _fes_weights(p, t, X):
    ct = np.asarray(p["centers_t"], dtype=float)
    cx = np.asarray(p["centers_x"], dtype=float)
    dist = np.linalg.norm(X[:, None, :] - cx[None, :, :], axis=2)
    return np.exp(-p["gamma"] * dist * np.abs(t - ct)[None, :])


def eval_coefficients(proc, t, x, u=None):
    """Drift vector and scalar diffusion amplitude at a single point."""
    if not (0.0 <= t <= proc.T):
        raise ValueError(f"t={t} outside [0, {proc.T}]")
    b, s = proc.coefficients(t, np.atleast_2d(np.asarray(x, dtype=float)), u)
    return b[0], float(s[0])


# --- reference processes with the experiment parameters -----------------------

def ou(theta=0.5, mu=2.5, sigma=None, mu0=0.5, sigma0_sq=None, T=10.0):
    """OU process; defaults give a constant variance and a mean rising 0.5 -> 2.5."""
    if not theta > 0:
        raise ValueError("OU theta must be positive")
    if sigma is None:
        sigma = np.sqrt(theta / 4.0)
    if sigma0_sq is None:
        sigma0_sq = sigma**2 / (2.0 * theta)
    return ProcessDef("OU", {"theta": theta, "mu": mu, "sigma": sigma,
                             "mu0": mu0, "sigma0_sq": sigma0_sq}, T, 1, "ou")


def controlled_ou(theta=0.5, sigma=None, mu0=0.5, sigma0_sq=None, T=10.0):
    if not theta > 0:
        raise ValueError("OU theta must be positive")
    if sigma is None:
        sigma = np.sqrt(theta / 4.0)
    if sigma0_sq is None:
        sigma0_sq = sigma**2 / (2.0 * theta)
    return ProcessDef("ControlledOU", {"theta": theta, "sigma": sigma,
                                       "mu0": mu0, "sigma0_sq": sigma0_sq}, T, 1, "controlled-ou")


def dubins(v=2.0, theta_amp=3.0, sigma=0.3, init_var=0.25, T=10.0):
    return ProcessDef("Dubins", {"v": v, "theta_amp": theta_amp, "sigma": sigma,
                                 "init_mean": np.zeros(2), "init_var": init_var}, T, 2, "dubins")


def controlled_dubins(v=2.0, sigma=0.3, init_var=0.25, T=10.0):
    return ProcessDef("ControlledDubins", {"v": v, "sigma": sigma, "init_mean": np.zeros(2),
                                           "init_var": init_var}, T, 2, "controlled-dubins")


# Centers and gamma are the experiment's; drift/diffusion weights are not given
# there and are fixed here.
FES_B_WEIGHTS = ((1.0, 0.0), (1.5, 2.0), (0.5, 1.0))
FES_S_WEIGHTS = (0.3, 0.3, 0.3)
FES_SIGMA_FLOOR = 1e-6


def fes(b_weights=FES_B_WEIGHTS, s_weights=FES_S_WEIGHTS, gamma=1.0, init_var=0.25, T=3.0):
    return ProcessDef("FES", {
        "centers_t": np.array([0.0, 1.0, 3.0]),
        "centers_x": np.array([[0.0, 0.0], [1.0, 0.0], [4.0, 6.0]]),
        "b_weights": np.asarray(b_weights, dtype=float),
        "s_weights": np.asarray(s_weights, dtype=float),
        "gamma": gamma, "init_mean": np.zeros(2), "init_var": init_var,
    }, T, 2, "fes")


# --- analytic oracles -----------------------------------------------------------

def analytic_ou_density(proc, t):
    """Mean and variance of the OU marginal at time(s) ``t``."""
    if proc.kind != "OU":
        raise ValueError(f"analytic density only available for OU, got {proc.kind}")
    p = proc.params
    t = np.asarray(t, dtype=float)
    th, s2 = p["theta"], p["sigma"] ** 2
    mean = np.exp(-th * t) * (p["mu0"] - p["mu"]) + p["mu"]
    var = (p["sigma0_sq"] - s2 / (2 * th)) * np.exp(-2 * th * t) + s2 / (2 * th)
    return mean, var


def ou_pdf(proc, t, x):
    """Analytic OU density at paired ``(t, x)``."""
    mean, var = analytic_ou_density(proc, t)
    x = np.asarray(x, dtype=float).reshape(np.shape(mean))
    return np.exp(-0.5 * (x - mean) ** 2 / var) / np.sqrt(2 * np.pi * var)


def ou_pdf_derivs(proc, t, x):
    """Analytic ``p, dp/dx, d2p/dx2, dp/dt`` of the OU marginal."""
    p = proc.params
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float).reshape(t.shape)
    th, s2 = p["theta"], p["sigma"] ** 2
    m, v = analytic_ou_density(proc, t)
    dm = -th * np.exp(-th * t) * (p["mu0"] - p["mu"])
    dv = -2 * th * (p["sigma0_sq"] - s2 / (2 * th)) * np.exp(-2 * th * t)
    pdf = ou_pdf(proc, t, x)
    z = x - m
    px = -z / v * pdf
    pxx = (z**2 / v**2 - 1.0 / v) * pdf
    # d/dt of N(x; m, v) = pdf * (z dm / v + (z^2 / v - 1) dv / (2 v))
    pt = pdf * (z * dm / v + (z**2 / v - 1.0) * dv / (2.0 * v))
    return pdf, px, pxx, pt


def analytic_controlled_ou_moments(proc, u, t):
    """Mean and variance of the controlled OU marginal under a two-step control.

    The mean relaxes toward the active control level on each constant segment;
    the variance does not depend on the control.
    """
    if proc.kind != "ControlledOU":
        raise ValueError(f"expected ControlledOU, got {proc.kind}")
    if not isinstance(u, ControlSpec) or u.family not in ("two_step", "constant"):
        raise ValueError("analytic moments need a two-step or constant control")
    p = proc.params
    th, s2 = p["theta"], p["sigma"] ** 2
    if u.family == "constant":
        u0 = u1 = u.params[0]
        t1 = np.inf
    else:
        u0, u1, t1 = u.params
    t = np.asarray(t, dtype=float)
    m_before = u0 + (p["mu0"] - u0) * np.exp(-th * t)
    m_t1 = u0 + (p["mu0"] - u0) * np.exp(-th * t1) if np.isfinite(t1) else 0.0
    m_after = u1 + (m_t1 - u1) * np.exp(-th * (t - t1))
    mean = np.where(t < t1, m_before, m_after)
    var = (p["sigma0_sq"] - s2 / (2 * th)) * np.exp(-2 * th * t) + s2 / (2 * th)
    return mean, var


def nonidentifiability_pair(theta, sigma, scale, mu=0.0):
    """Two stationary OU processes sharing every marginal density.

    Scaling ``theta`` by ``scale`` and ``sigma`` by ``sqrt(scale)`` keeps the
    stationary variance ``sigma^2 / (2 theta)`` fixed.
    """
    if not scale > 0:
        raise ValueError("scale must be positive")
    s0 = sigma**2 / (2.0 * theta)
    first = ou(theta=theta, mu=mu, sigma=sigma, mu0=mu, sigma0_sq=s0)
    second = ou(theta=scale * theta, mu=mu, sigma=np.sqrt(scale) * sigma, mu0=mu, sigma0_sq=s0)
    return first, second
