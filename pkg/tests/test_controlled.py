import numpy as np
import pytest

from fpident import fp, processes
from fpident.controlled import (GridSampler, PathStateSampler, RegularGridSampler,
                                build_controlled_fp_set, derive_seeds, fit_controlled_density,
                                fit_controlled_fp, generate_controlled_dataset,
                                predict_controlled, uncontrolled_as_controlled)
from fpident.controls import constant, two_step
from fpident.density import fit_density
from fpident.kernels import GaussianKernelParams
from fpident.simulate import config_for, simulate_process

KP = GaussianKernelParams(0.5)


@pytest.fixture(scope="module")
def cdata():
    proc = processes.controlled_ou()
    us = [two_step(1.0, -0.5, 4.0), two_step(-1.0, 1.5, 6.0), constant(0.3)]
    return generate_controlled_dataset(proc, us, config_for(proc, 30, 11, 4, seed=5))


def test_single_constant_control_degenerates_to_uncontrolled():
    proc = processes.ou()
    data = simulate_process(proc, 30, 11, substeps=4, seed=1)
    dm = fit_density(data, 1.0, 3.0)
    pts = GridSampler(4, 10, seed=2)(0, None, data, dm)
    un = fp.fit_fp_constrained(fp.build_fp_set(dm, pts), 1e-2, KP)
    cd = uncontrolled_as_controlled(data, constant(0.7))
    ctr = build_controlled_fp_set(cd, fit_controlled_density(cd, 1.0, 3.0),
                                  GridSampler(4, 10, seed=2))
    assert np.array_equal(ctr.points[:, :2], pts) and np.all(ctr.points[:, 2] == 0.7)
    cm = fit_controlled_fp(ctr, 1e-2, KP)
    Zq = pts[:15] + 0.05
    b0, s0 = un.predict(Zq)
    b1, s1 = predict_controlled(cm, Zq[:, 0], Zq[:, 1:], constant(0.7))
    assert np.allclose(b0, b1, atol=1e-8) and np.allclose(s0, s1, atol=1e-8)


def test_stacking_order_does_not_matter(cdata):
    dms = fit_controlled_density(cdata, 1.0, 3.0)
    s = GridSampler(3, 8, seed=9)
    tr = build_controlled_fp_set(cdata, dms, s)
    m = fit_controlled_fp(tr, 1e-2, KP, constrained=False)
    perm = np.random.default_rng(0).permutation(tr.N)
    mp = fit_controlled_fp(tr.take(perm), 1e-2, KP, constrained=False)
    Zq = tr.points[:10] + 0.03
    for a, b in zip(m.field.predict(Zq), mp.field.predict(Zq)):
        assert np.allclose(a, b, atol=1e-10)


def test_prediction_at_training_point_matches_stacked_model(cdata):
    dms = fit_controlled_density(cdata, 1.0, 3.0)
    tr = build_controlled_fp_set(cdata, dms, GridSampler(3, 8, seed=9))
    m = fit_controlled_fp(tr, 1e-2, KP)
    k = int(tr.source[5])
    b, s2 = predict_controlled(m, tr.points[5, 0], tr.points[5:6, 1:2], cdata.controls[k])
    b0, s0 = m.fp_model.predict(tr.points[5:6])
    assert np.array_equal(b, b0) and np.array_equal(s2, s0)


def test_controls_equal_before_switch_give_equal_predictions(cdata):
    dms = fit_controlled_density(cdata, 1.0, 3.0)
    m = fit_controlled_fp(build_controlled_fp_set(cdata, dms, GridSampler(3, 8, seed=9)), 1e-2, KP)
    u1, u2 = two_step(0.5, 1.0, 5.0), two_step(0.5, -1.0, 7.0)
    t, x = np.linspace(0, 4.9, 6), np.linspace(-1, 2, 6)[:, None]
    assert all(np.array_equal(a, b) for a, b in
               zip(predict_controlled(m, t, x, u1), predict_controlled(m, t, x, u2)))


def test_samplers():
    data = simulate_process(processes.dubins(), 10, 6, substeps=2, seed=0)
    lat = RegularGridSampler(2, 9, (0.0, 10.0), ((-1.0, -1.0), (1.0, 1.0)))(0, None, data, None)
    assert lat.shape == (18, 3) and np.unique(lat[:, 1]).size == 3
    with pytest.raises(ValueError):
        RegularGridSampler(2, 8, (0.0, 1.0), (0.0, 1.0))(0, None, data, None)
    a = PathStateSampler(20, seed=3)(0, None, data, None)
    b = PathStateSampler(20, seed=3, start=20)(0, None, data, None)
    both = {tuple(r) for r in a} | {tuple(r) for r in b}
    assert len(both) == 40
    with pytest.raises(ValueError):
        PathStateSampler(50, seed=3, start=20)(0, None, data, None)


def test_seed_derivation_and_dataset_checks(cdata):
    assert derive_seeds(1, 3) == derive_seeds(1, 3)
    assert len(set(derive_seeds(1, 3))) == 3
    with pytest.raises(ValueError):
        type(cdata)((constant(0.0),), cdata.per_control)
    with pytest.raises(ValueError):
        build_controlled_fp_set(cdata, [], GridSampler(2, 2))
