import numpy as np
import pytest

from fpident import fp, processes
from fpident.density import DensityEvaluation, fit_density
from fpident.kernels import GaussianKernelParams
from fpident.simulate import simulate_process

KP = GaussianKernelParams(0.4)


def _analytic_set(N, seed, constraint_idx=None):
    proc = processes.ou()
    rng = np.random.default_rng(seed)
    t, x = rng.uniform(0.5, 9.5, N), rng.uniform(-0.5, 3.5, N)
    pdf, px, pxx, pt = processes.ou_pdf_derivs(proc, t, x)
    return fp.FPTrainingSet(np.column_stack([t, x]),
                            DensityEvaluation(pdf, px[:, None], pxx[:, None, None], pt), 1,
                            constraint_idx)


@pytest.fixture(scope="module")
def dubins_set():
    data = simulate_process(processes.dubins(), 30, 11, substeps=4, seed=3)
    dm = fit_density(data, 1.0, 3.0)
    rng = np.random.default_rng(4)
    pts = data.points()[rng.choice(30 * 11, 60, replace=False)]
    return fp.build_fp_set(dm, pts)


def test_ridge_solution_is_dense_solve():
    tr = _analytic_set(60, 0)
    m = fp.fit_fp(tr, 1e-3, KP)
    K = fp.assemble_tilde_gram(tr, KP)
    assert np.allclose(K, K.T) and np.linalg.eigvalsh(K).min() > -1e-8
    beta = np.linalg.solve(K + tr.N * 1e-3 * np.eye(tr.N), tr.dens.dhat)
    assert np.allclose(m.beta, beta, rtol=1e-8, atol=1e-10)
    # training residual in feature form: d - K beta
    assert np.allclose(fp.fp_residual(m, tr), tr.dens.dhat - K @ beta, atol=1e-10)


@pytest.mark.parametrize("constrained", [False, True])
def test_feature_residual_equals_pointwise_generator(constrained, dubins_set):
    """The feature form of (L*)p agrees with applying the operator to the
    predicted coefficients and their spatial derivatives."""
    tr = dubins_set
    fit = fp.fit_fp_constrained if constrained else fp.fit_fp
    m = fit(tr, 1e-2, KP)
    val = tr.take(np.arange(0, tr.N, 3))
    b, s2 = m.predict(val.points)
    db, ds2, d2s2 = m.field.predict_derivs(val.points)
    gen = fp.fp_operator(val.dens, b, db, s2, ds2, d2s2)
    assert np.allclose(fp.fp_residual(m, val), val.dens.dhat - gen, atol=1e-9)


def test_constrained_feasible_and_reload(dubins_set):
    m = fp.fit_fp_constrained(dubins_set, 1e-3, KP)
    s2 = m.predict(dubins_set.points)[1]
    assert s2.min() >= -1e-8
    again = fp.model_from_dual(dubins_set, 1e-3, KP, m.gamma_dual)
    Zq = dubins_set.points[:10] + 0.05
    for a, b in zip(m.predict(Zq), again.predict(Zq)):
        assert np.allclose(a, b, atol=1e-9)


def test_shared_evaluation_matches_predict(dubins_set):
    m = fp.fit_fp_constrained(dubins_set, 1e-2, KP)
    X = np.random.default_rng(5).normal(2.0, 2.0, (7, 2))
    b1, s1 = m.field.evaluate_shared(3.3, X)
    b2, s2 = m.predict(np.column_stack([np.full(7, 3.3), X]))
    assert np.allclose(b1, b2, atol=1e-12) and np.allclose(s1, s2, atol=1e-12)


def test_nystrom_full_anchor_set_matches(dubins_set):
    full = fp.fit_fp(dubins_set, 1e-3, KP)
    nys = fp.fit_fp_nystrom(dubins_set, 1e-3, KP, np.arange(dubins_set.N), constrained=False)
    Zq = dubins_set.points[:20] + 0.1
    for a, b in zip(full.predict(Zq), nys.predict(Zq)):
        assert np.allclose(a, b, atol=1e-8)


def test_nystrom_constrained_feasible(dubins_set):
    anchors = np.arange(0, dubins_set.N, 2)
    m = fp.fit_fp_nystrom(dubins_set, 1e-3, KP, anchors)
    assert m.predict(dubins_set.points)[1].min() >= -1e-8


def test_validation_cache_is_transparent(dubins_set):
    tr, val = dubins_set.take(np.arange(40)), dubins_set.take(np.arange(40, 60))
    m = fp.fit_fp(tr, 1e-2, KP)
    cache = fp.ValidationCache(val, tr, KP)
    assert np.isclose(fp.fp_residual_mse(m, val, cache), fp.fp_residual_mse(m, val), rtol=1e-12)
    assert fp.zero_model_mse(val) == pytest.approx(np.mean(val.dens.dhat ** 2))


def test_argument_errors(dubins_set):
    with pytest.raises(ValueError):
        fp.fit_fp(dubins_set, 0.0, KP)
    with pytest.raises(ValueError):
        fp.fit_fp_nystrom(dubins_set, 1e-3, KP, [0, 0])
    with pytest.raises(ValueError):
        fp.fit_fp_nystrom(dubins_set, 1e-3, KP, [dubins_set.N])
    with pytest.raises(ValueError):
        fp.fit_fp_constrained(dubins_set.with_constraints([]), 1e-3, KP)
    with pytest.raises(ValueError):
        fp.model_from_dual(dubins_set, 1e-3, KP, -np.ones(dubins_set.N))
    with pytest.raises(ValueError):
        dubins_set.with_constraints([dubins_set.N])
    with pytest.raises(ValueError):
        fp.FPTrainingSet(dubins_set.points, DensityEvaluation(dubins_set.dens.P), 2)
