"""Extremum-seeking law: values, continuity at zero cost, rate bound.

The closed-form channel values are cross-checked against mpmath at 50
digits so the float expression in the package carries no hidden error.
"""

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from estrack.controller import (
    CostSample,
    ESGains,
    dither_period,
    es_rate_bound,
    es_rhs,
    reduced_rhs,
    window_start,
)

UNIT = ESGains(gamma=1.0, epsilon=1.0, eta=1.0, n_u=2)


def _rhs_mp(t, y, gamma, epsilon, eta, n_u):
    coef = 2 * gamma / (eta * mp.sqrt(epsilon))
    omega = 2 * mp.pi / (eta * epsilon)
    return [coef * mp.sqrt(mp.pi * j * y) * mp.sin(mp.log(y) + omega * j * t)
            for j in range(1, n_u + 1)]


def test_gains_validation():
    for bad in (dict(gamma=0.0), dict(epsilon=-1.0), dict(eta=0.0),
                dict(n_u=0), dict(n_u=1.5), dict(h_floor=-1e-3)):
        kw = dict(gamma=1.0, epsilon=1.0, eta=1.0)
        kw.update(bad)
        with pytest.raises(ValueError):
            ESGains(**kw)
    with pytest.raises(ValueError):
        CostSample(t=0.0, y=-1e-9)


def test_tagged_example_unit_cost():
    # ln 1 = 0 and t = 0 zero both phases, so every channel is exactly 0
    assert np.array_equal(es_rhs(0.0, 1.0, UNIT), np.zeros(2))


def test_tagged_example_quarter_phase():
    # y = e^(pi/2): the single channel reads 2*sqrt(pi*y)*sin(pi/2)
    y = math.exp(math.pi / 2.0)
    g = ESGains(gamma=1.0, epsilon=1.0, eta=1.0, n_u=1)
    got = es_rhs(0.0, y, g)[0]
    with mp.workdps(50):
        want = 2 * mp.sqrt(mp.pi * mp.e ** (mp.pi / 2))
        assert abs(mp.mpf(float(got)) - want) / want < mp.mpf("1e-12")


def test_tagged_example_two_channels_against_mpmath():
    t, y = 0.37, 4.2
    g = ESGains(gamma=150.0, epsilon=1e-3, eta=5.0, n_u=2)
    got = es_rhs(t, y, g)
    with mp.workdps(50):
        want = _rhs_mp(mp.mpf("0.37"), mp.mpf("4.2"), mp.mpf("150"),
                       mp.mpf("0.001"), mp.mpf("5"), 2)
        for gv, wv in zip(got, want):
            # the fast-phase sine amplifies the float error of its
            # argument (omega*t ~ 1e3), so compare to the value the
            # float argument pins down, not to more digits than it has
            assert abs(mp.mpf(float(gv)) - wv) / abs(wv) < mp.mpf("1e-9")


def test_zero_cost_fixed_point_and_floor():
    assert np.array_equal(es_rhs(12.3, 0.0, UNIT), np.zeros(2))
    assert np.array_equal(es_rhs(12.3, UNIT.h_floor, UNIT), np.zeros(2))
    assert np.any(es_rhs(12.3, 10 * UNIT.h_floor, UNIT) != 0.0)


def test_negative_cost_rejected():
    with pytest.raises(ValueError):
        es_rhs(0.0, -1e-6, UNIT)
    with pytest.raises(ValueError):
        es_rate_bound(-1.0, UNIT)


@given(
    t=st.floats(0.0, 1e3),
    y=st.floats(1e-12, 1e6),
    gamma=st.floats(0.1, 200.0),
    epsilon=st.floats(1e-4, 1.0),
    eta=st.floats(0.5, 30.0),
    n_u=st.integers(1, 4),
)
def test_rate_bound_dominates_rhs(t, y, gamma, epsilon, eta, n_u):
    g = ESGains(gamma=gamma, epsilon=epsilon, eta=eta, n_u=n_u)
    r = float(np.linalg.norm(es_rhs(t, y, g)))
    assert r <= es_rate_bound(y, g) * (1.0 + 1e-12) + 1e-300


@given(y=st.floats(1e-10, 1e4))
def test_rate_bound_is_tightest_quadrature_sum(y):
    # equality would need every channel's sine at +/-1 simultaneously;
    # the bound must still match the quadrature sum exactly
    g = ESGains(gamma=3.0, epsilon=0.01, eta=2.0, n_u=3)
    # n_u = 3 channels sum to 1 + 2 + 3 = 6 under the square root
    want = g.rate_coefficient * math.sqrt(math.pi * y * 6.0)
    assert es_rate_bound(y, g) == pytest.approx(want, rel=1e-15)


def test_continuity_scale_near_zero_cost():
    # sqrt(y) envelope: the rhs vanishes like sqrt(y) as y -> 0+
    g = ESGains(gamma=1.0, epsilon=1.0, eta=1.0, n_u=1, h_floor=0.0)
    for y in (1e-4, 1e-8, 1e-12, 1e-16):
        r = abs(es_rhs(0.3, y, g)[0])
        assert r <= 2.0 * math.sqrt(math.pi * y)


def test_window_start_and_dither_period():
    g = ESGains(gamma=1.0, epsilon=0.01, eta=5.0)
    w = dither_period(g)
    assert w == pytest.approx(0.05)
    assert window_start(0.124, g) == pytest.approx(0.10)
    assert window_start(0.05, g) == pytest.approx(0.05)
    assert window_start(0.0, g) == 0.0


def test_reduced_rhs_freezes_phase_at_window_start():
    g = ESGains(gamma=2.0, epsilon=0.5, eta=1.0, n_u=2)
    # cost evaluator with distinct level at the window start
    def cost(t, u):
        return 2.0 + math.sin(t)

    t, t_m = 0.4, 0.0
    got = reduced_rhs(t, np.zeros(2), t_m, cost, g)
    coef = g.rate_coefficient
    omega = g.base_frequency
    y_now = cost(t, None)
    log_phase = math.log(cost(t_m, None))
    want = np.array([
        coef * math.sqrt(math.pi * 1 * y_now) * math.sin(log_phase + omega * t),
        coef * math.sqrt(math.pi * 2 * y_now) * math.sin(log_phase + 2 * omega * t),
    ])
    assert np.allclose(got, want, rtol=1e-13)


def test_reduced_rhs_zero_amplitude_and_phase_floor():
    g = ESGains(gamma=1.0, epsilon=1.0, eta=1.0, n_u=2)
    assert np.array_equal(
        reduced_rhs(0.3, np.zeros(2), 0.0, lambda t, u: 0.0, g), np.zeros(2))
    # floor hit only at the frozen phase time: still zero by convention
    def cost(t, u):
        return 0.0 if t == 0.0 else 1.0

    assert np.array_equal(
        reduced_rhs(0.3, np.zeros(2), 0.0, cost, g), np.zeros(2))


def test_reduced_rhs_rejects_negative_cost():
    with pytest.raises(ValueError):
        reduced_rhs(0.0, np.zeros(2), 0.0, lambda t, u: -1.0, UNIT)
