import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fpident.kernels import (DerivGramSet, GaussianKernelParams, deriv_grams, gram,
                             temporal_gram, temporal_gram_dt)

points = st.integers(1, 3).flatmap(
    lambda n: st.tuples(st.just(n), st.integers(2, 8), st.integers(0, 2**32 - 1)))


def _pts(n, N, seed):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(N, 1 + n))


def test_gram_values():
    Z = np.array([[0.0, 0.0], [1.0, 2.0]])
    K = gram(Z, Z, GaussianKernelParams(0.5))
    assert np.allclose(np.diag(K), 1.0)
    assert np.isclose(K[0, 1], np.exp(-0.5 * 5.0))


def test_gamma_must_be_positive():
    with pytest.raises(ValueError):
        GaussianKernelParams(0.0)


@settings(max_examples=40, deadline=None)
@given(points, st.floats(0.05, 5.0))
def test_gram_symmetric_psd(spec, g):
    n, N, seed = spec
    Z = _pts(n, N, seed)
    K = gram(Z, Z, g)
    assert np.allclose(K, K.T, atol=0)
    assert np.linalg.eigvalsh(K).min() > -1e-10


@settings(max_examples=30, deadline=None)
@given(points, st.floats(0.1, 3.0))
def test_sign_and_symmetry_identities(spec, g):
    n, N, seed = spec
    Z, Zp = _pts(n, N, seed), _pts(n, N, seed + 1)
    S = DerivGramSet(Z, Zp, g, n)
    St = DerivGramSet(Zp, Z, g, n)
    for i in range(n):
        assert np.allclose(S.block((), (i,)), -S.block((i,)))
        for j in range(n):
            assert np.allclose(S.block((i, j)), S.block((j, i)))
            assert np.allclose(S.block((), (i, j)), S.block((i, j)))
            assert np.allclose(S.block((i,), (j,)), -S.block((i, j)))
            # swapping the arguments transposes sub and sup
            assert np.allclose(S.block((i,), (j,)), St.block((j,), (i,)).T)


def test_temporal_derivative_matches_fd():
    t1, t2, h = np.linspace(0, 3, 7), np.linspace(0.2, 2.8, 5), 1e-5
    fd = (temporal_gram(t1 + h, t2, 0.7) - temporal_gram(t1 - h, t2, 0.7)) / (2 * h)
    assert np.allclose(temporal_gram_dt(t1, t2, 0.7), fd, atol=1e-8)


def test_index_and_order_errors():
    S = DerivGramSet(_pts(2, 3, 0), _pts(2, 3, 1), 1.0, 2, max_order=2)
    with pytest.raises(IndexError):
        S.block((2,))
    with pytest.raises(ValueError):
        S.block((0, 0), (1,))
    with pytest.raises(ValueError):
        DerivGramSet(_pts(2, 3, 0), _pts(1, 3, 1), 1.0, 1)
    with pytest.raises(ValueError):
        DerivGramSet(_pts(1, 3, 0), _pts(1, 3, 1), 1.0, 2)


def test_eager_grams_match_lazy():
    Z, Zp = _pts(2, 4, 3), _pts(2, 5, 4)
    eager = deriv_grams(Z, Zp, GaussianKernelParams(0.8), 2)
    lazy = DerivGramSet(Z, Zp, GaussianKernelParams(0.8), 2)
    for key in [((0,), ()), ((0, 1), ()), ((1,), (0, 1)), ((0, 1), (0, 1))]:
        assert np.array_equal(eager.block(*key), lazy.block(*key))
