import numpy as np
import pytest

from fpident import processes
from fpident.controls import constant, two_step
from fpident.metrics import moment_track
from fpident.simulate import (SimConfig, SimulationDiverged, simulate, simulate_estimated,
                              simulate_process)


def test_ou_moments_match_analytic():
    proc = processes.ou()
    d = simulate_process(proc, 4000, 11, substeps=20, seed=1)
    tr = moment_track(d)
    mean, var = processes.analytic_ou_density(proc, d.times)
    assert np.all(np.abs(tr.mean[:, 0] - mean) < 4 * tr.stderr[:, 0] + 1e-3)
    assert np.all(np.abs(tr.var[:, 0] / var - 1) < 0.1)


def test_controlled_ou_moments_match_analytic():
    proc = processes.controlled_ou()
    u = two_step(1.5, -1.0, 4.0)
    d = simulate_process(proc, 4000, 21, substeps=20, seed=2, u=u)
    tr = moment_track(d)
    mean, _ = processes.analytic_controlled_ou_moments(proc, u, d.times)
    assert np.all(np.abs(tr.mean[:, 0] - mean) < 4 * tr.stderr[:, 0] + 0.01)
    m_c, _ = processes.analytic_controlled_ou_moments(proc, constant(0.7), d.times)
    assert np.isclose(m_c[-1], 0.7 + (0.5 - 0.7) * np.exp(-0.5 * 10))


def test_ou_pdf_derivatives_match_fd():
    proc = processes.ou()
    t, x, h = np.array([0.3, 2.0, 7.5]), np.array([0.1, 1.4, 2.9]), 1e-6
    pdf, px, pxx, pt = processes.ou_pdf_derivs(proc, t, x)
    assert np.allclose(px, (processes.ou_pdf(proc, t, x + h) - processes.ou_pdf(proc, t, x - h)) / (2 * h), atol=1e-7)
    assert np.allclose(pt, (processes.ou_pdf(proc, t + h, x) - processes.ou_pdf(proc, t - h, x)) / (2 * h), atol=1e-7)
    d1 = lambda xx: processes.ou_pdf_derivs(proc, t, xx)[1]  # noqa: E731
    assert np.allclose(pxx, (d1(x + h) - d1(x - h)) / (2 * h), atol=1e-6)


def test_seed_determinism_and_distinct_seeds():
    proc = processes.dubins()
    a = simulate_process(proc, 5, 6, seed=7)
    b = simulate_process(proc, 5, 6, seed=7)
    c = simulate_process(proc, 5, 6, seed=8)
    assert np.array_equal(a.paths, b.paths)
    assert not np.array_equal(a.paths, c.paths)


def test_dubins_deterministic_limit():
    proc = processes.ProcessDef("Dubins", {**processes.dubins().params, "sigma": 1e-300}, 10.0, 2)
    d = simulate_process(proc, 2, 3, substeps=2000, seed=0, init_var=0.0)
    # heading 3 sin(pi t / 10): x(t) = int_0^t 2 cos(.)
    s = np.linspace(0, 5, 200001)
    x5 = np.trapezoid(2 * np.cos(3 * np.sin(np.pi * s / 10)), s)
    assert abs(d.paths[0, 1, 0] - x5) < 5e-3


def test_fes_diffusion_positive():
    proc = processes.fes()
    b, s = proc.coefficients(1.0, np.random.default_rng(0).normal(size=(50, 2)) * 5)
    assert b.shape == (50, 2) and np.all(s > 0)


def test_controls_required_and_time_range():
    with pytest.raises(ValueError):
        processes.controlled_ou().coefficients(0.0, np.zeros((1, 1)))
    with pytest.raises(ValueError):
        processes.eval_coefficients(processes.ou(), 11.0, [0.0])
    b, s = processes.eval_coefficients(processes.ou(), 0.0, [0.5])
    assert np.isclose(b[0], 0.5 * 2.0) and np.isclose(s, np.sqrt(0.125))


def test_process_record_round_trip():
    for proc in (processes.ou(), processes.fes(), processes.controlled_dubins()):
        again = processes.ProcessDef.from_record(proc.to_record())
        X = np.ones((3, proc.n))
        u = constant(0.2) if proc.controlled else None
        for a, b in zip(proc.coefficients(0.5, X, u), again.coefficients(0.5, X, u)):
            assert np.array_equal(a, b)


def test_invalid_processes_and_configs():
    with pytest.raises(ValueError):
        processes.ou(theta=-1.0)
    with pytest.raises(ValueError):
        processes.ProcessDef("Nope", {}, 1.0)
    with pytest.raises(ValueError):
        processes.nonidentifiability_pair(0.5, 0.3, 0.0)
    with pytest.raises(ValueError):
        SimConfig(Q=0, M=2, T=1.0)
    with pytest.raises(ValueError):
        SimConfig(Q=1, M=2, T=1.0, init_var=-1)


def test_divergence_is_reported():
    blowup = lambda t, X, u: (X * 1e200, 1.0)  # noqa: E731
    with pytest.raises(SimulationDiverged) as ei:
        with np.errstate(over="ignore", invalid="ignore"):
            simulate(blowup, SimConfig(Q=4, M=5, T=1.0, init_mean=(1.0,), substeps=5))
    assert ei.value.n_diverged > 2 and ei.value.Q == 4


def test_estimated_simulation_floors_negative_diffusion():
    class Field:
        d = 0

        def evaluate_shared(self, t, X, v=None):
            return np.zeros_like(X), np.full(X.shape[0], -1.0)

    d = simulate_estimated(Field(), SimConfig(Q=3, M=4, T=1.0, init_mean=(0.0,)))
    assert np.abs(d.paths).max() < 1e-2
