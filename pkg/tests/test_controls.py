import numpy as np
import pytest
from hypothesis import given, strategies as st

from fpident.controls import (SINUSOIDAL_RANGES, TWO_STEP_RANGES, ControlSpec, constant,
                              sample_controls, sinusoidal, two_step)


def test_family_values():
    u = two_step(1.0, -1.0, 4.0)
    assert np.array_equal(u(np.array([0.0, 3.99, 4.0, 9.0])), [1.0, 1.0, -1.0, -1.0])
    assert np.isclose(sinusoidal(2.0)(5.0), 2.0)
    assert np.array_equal(constant(0.3)(np.zeros(3)), np.full(3, 0.3))


@given(st.integers(1, 50), st.integers(0, 2**63))
def test_samples_stay_in_range(K, seed):
    for fam, ranges in (("two_step", TWO_STEP_RANGES), ("sinusoidal", SINUSOIDAL_RANGES)):
        us = sample_controls(fam, ranges, K, seed)
        assert len(us) == K
        names = ("u0", "u1", "t1") if fam == "two_step" else ("a",)
        for u in us:
            for name, p in zip(names, u.params):
                lo, hi = ranges[name]
                assert lo <= p <= hi
        assert us == sample_controls(fam, ranges, K, seed)


def test_record_round_trip():
    u = two_step(0.1, 0.2, 5.0)
    assert ControlSpec.from_record(u.to_record()) == u


def test_errors():
    with pytest.raises(ValueError):
        ControlSpec("ramp", (1.0,))
    with pytest.raises(ValueError):
        ControlSpec("two_step", (1.0, 2.0))
    with pytest.raises(ValueError):
        sample_controls("two_step", TWO_STEP_RANGES, 0, 0)
    with pytest.raises(ValueError):
        sample_controls("two_step", {"u0": (0, 1), "u1": (0, 1)}, 2, 0)
    with pytest.raises(ValueError):
        sample_controls("sinusoidal", {"a": (1, 0)}, 2, 0)
