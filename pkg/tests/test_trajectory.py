import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from pgnn_ff.trajectory import (
    DEFAULT_BOUNDS,
    Bounds,
    ReferenceProfile,
    concat_profiles,
    discrete_derivative_check,
    make_point_to_point,
    preset,
)

Ts = 1e-4
SLACK = 1e-9


def within(report, b: Bounds):
    return (report.vmax_obs <= b.vmax + SLACK and report.amax_obs <= b.amax + SLACK
            and report.jmax_obs <= b.jmax + SLACK)


def test_constant_profile():
    p = make_point_to_point(0.05, 0.05, DEFAULT_BOUNDS, Ts, dwell=0.01)
    assert len(p) == 100 and np.all(p.r == 0.05)
    assert discrete_derivative_check(p) == (0.0, 0.0, 0.0)


def test_ramp_report():
    c = 0.02
    p = ReferenceProfile(c * Ts * np.arange(20), Ts, DEFAULT_BOUNDS)
    rep = discrete_derivative_check(p)
    assert rep.vmax_obs == pytest.approx(c, rel=1e-9)
    assert rep.amax_obs <= 1e-9


def test_short_profile_rejected():
    with pytest.raises(ValueError):
        discrete_derivative_check(ReferenceProfile(np.zeros(3), Ts, DEFAULT_BOUNDS))


@pytest.mark.parametrize("name,lo,hi", [("r1", -0.1, 0.1), ("r2", 0.0, 0.17)])
def test_presets(name, lo, hi):
    p = preset(name)
    rep = discrete_derivative_check(p)
    assert within(rep, DEFAULT_BOUNDS)
    assert rep.vmax_obs >= 0.9 * DEFAULT_BOUNDS.vmax
    assert rep.amax_obs >= 0.9 * DEFAULT_BOUNDS.amax
    assert rep.jmax_obs >= 0.9 * DEFAULT_BOUNDS.jmax
    assert p.r.min() == lo and p.r.max() == hi
    assert p.r[0] == p.r[-1]


def test_unknown_preset():
    with pytest.raises(ValueError):
        preset("r9")


def test_concat_requires_joined_profiles():
    a = make_point_to_point(0.0, 0.01, DEFAULT_BOUNDS, Ts)
    b = make_point_to_point(0.02, 0.0, DEFAULT_BOUNDS, Ts)
    with pytest.raises(ValueError):
        concat_profiles([a, b])
    c = make_point_to_point(0.01, 0.0, DEFAULT_BOUNDS, Ts)
    assert len(concat_profiles([a, c])) == len(a) + len(c) - 1


pos = st.floats(-0.3, 0.3)


@settings(max_examples=60, deadline=None)
@given(pos, pos, st.floats(0.01, 0.2), st.floats(0.5, 10.0), st.floats(50.0, 2000.0))
def test_random_moves_respect_bounds(start, end, vmax, amax, jmax):
    assume(abs(end - start) > 1e-6)
    b = Bounds(vmax, amax, jmax)
    p = make_point_to_point(start, end, b, Ts, dwell=0.001)
    assert abs(p.r[-1] - end) <= 1e-9
    assert p.r[0] == start
    assert within(discrete_derivative_check(p), b)


@settings(max_examples=30, deadline=None)
@given(pos, pos)
def test_reversal_mirrors(start, end):
    assume(abs(end - start) > 1e-6)
    fwd = make_point_to_point(start, end, DEFAULT_BOUNDS, Ts)
    back = make_point_to_point(end, start, DEFAULT_BOUNDS, Ts)
    # mirror about the midpoint
    np.testing.assert_allclose(fwd.r - start, -(back.r - end), atol=1e-12)


def test_tiny_move_degenerates():
    p = make_point_to_point(0.0, 1e-6, DEFAULT_BOUNDS, Ts)
    rep = discrete_derivative_check(p)
    assert within(rep, DEFAULT_BOUNDS) and rep.vmax_obs < DEFAULT_BOUNDS.vmax
    assert p.r[-1] == 1e-6
