"""Periodic reference inputs and the shooting solve for their orbits."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from estrack.plant import CstrParams
from estrack.reference import (
    ReferenceSpec,
    ShootingError,
    find_periodic_orbit,
    make_reference,
    reference_input,
)

P = CstrParams()


def test_spec_validation():
    with pytest.raises(ValueError):
        ReferenceSpec(waveform="sawtooth")
    with pytest.raises(ValueError):
        ReferenceSpec(period=0.0)
    with pytest.raises(ValueError):
        ReferenceSpec(a1=-5.0).validate_against(P)


@given(t=st.floats(-300.0, 300.0))
def test_trig_input_half_period_antisymmetry(t):
    spec = ReferenceSpec()
    a = reference_input(t, spec)
    b = reference_input(t + spec.period / 2.0, spec)
    assert np.max(np.abs(a + b)) < 1e-12


@given(t=st.floats(0.0, 200.0))
def test_bang_input_takes_level_values(t):
    spec = ReferenceSpec(waveform="bang")
    u = reference_input(t, spec)
    s = np.sign(np.sin(2.0 * np.pi * t / spec.period))
    assert np.allclose(u, s * spec.amplitudes)


def test_input_vectorization_matches_scalar_calls():
    spec = ReferenceSpec(waveform="bang")
    ts = np.linspace(0.0, 150.0, 37)
    batch = reference_input(ts, spec)
    assert batch.shape == (37, 2)
    for t, row in zip(ts, batch):
        assert np.array_equal(row, reference_input(t, spec))


def test_trig_orbit_location_and_defect():
    x0 = find_periodic_orbit(ReferenceSpec(), P)
    # the orbit starts near the known anchor point for these amplitudes
    assert np.linalg.norm(x0 - np.array([-0.065, 0.008])) < 5e-3
    ref = make_reference(ReferenceSpec(), P)
    assert ref.periodicity_defect(1) <= 1e-8


def test_bang_orbit_defect_and_two_period_consistency():
    ref = make_reference(ReferenceSpec(waveform="bang"), P)
    assert ref.periodicity_defect(1) <= 1e-8
    # integrating through two periods must come back as well: rules out a
    # spurious half-period or sign-flipped solution
    assert ref.periodicity_defect(2) <= 1e-8


def test_orbit_state_inherits_input_antisymmetry():
    # x'(t) = -phi x + r(x) + u*(t) is not odd, but the orbit of the trig
    # reference still nearly flips sign at half period because the
    # nonlinearity is weak along it; verify only the periodicity-based
    # identity that is exact: x*(t + T) = x*(t)
    ref = make_reference(ReferenceSpec(), P)
    for t in (0.0, 13.7, 61.2):
        a = ref.state_at(t)
        b = ref.state_at(t + ref.spec.period)
        assert np.max(np.abs(a - b)) < 1e-9


def test_dense_mode_matches_cointegration():
    spec = ReferenceSpec()
    ref_c = make_reference(spec, P, mode="cointegrate")
    ref_d = make_reference(spec, P, mode="dense")
    assert np.array_equal(ref_c.x_star_0, ref_d.x_star_0)
    ts = np.linspace(0.0, spec.period, 23)
    worst = max(float(np.max(np.abs(ref_c.state_at(t) - ref_d.state_at(t))))
                for t in ts)
    assert worst < 1e-7


def test_dense_mode_matches_cointegration_for_bang():
    spec = ReferenceSpec(waveform="bang")
    ref_c = make_reference(spec, P, mode="cointegrate")
    ref_d = make_reference(spec, P, mode="dense")
    ts = np.linspace(0.0, spec.period, 23)
    worst = max(float(np.max(np.abs(ref_c.state_at(t) - ref_d.state_at(t))))
                for t in ts)
    assert worst < 1e-7


def test_sample_agrees_with_state_at():
    ref = make_reference(ReferenceSpec(), P)
    ts = np.array([0.0, 7.5, 50.0, 99.9])
    block = ref.sample(ts)
    for t, row in zip(ts, block):
        assert np.max(np.abs(row - ref.state_at(t))) < 1e-9


def test_shooting_converges_from_rough_guess():
    # the forced plant contracts, so even a guess near the domain corner
    # shoots home; this pins the solver's robustness rather than failure
    x0 = find_periodic_orbit(ReferenceSpec(), P, x_guess=(-0.9, -0.9))
    assert np.linalg.norm(x0 - np.array([-0.065, 0.008])) < 5e-3


def test_shooting_reports_exhausted_budget():
    with pytest.raises(ShootingError):
        find_periodic_orbit(ReferenceSpec(), P, x_guess=(0.4, 0.2),
                            max_iter=0)
