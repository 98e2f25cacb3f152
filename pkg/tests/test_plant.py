"""Vector field, Jacobian, and steady-state map of the reaction model.

High-precision oracles come from mpmath: the vector field is re-evaluated
at 50 digits and the Jacobian is differentiated numerically at that
precision, so closed-form mistakes cannot hide behind float roundoff.
"""

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from estrack.plant import (
    CstrParams,
    DomainError,
    SteadyStateError,
    cstr_jacobian,
    cstr_rhs,
    in_domain,
    spectral_info,
    steady_state_continuation,
    steady_state_map,
    steady_state_stability,
)

P = CstrParams()


def _rhs_mp(x1, x2, u1, u2, p, variant="corrected"):
    """The model re-written independently; ambient mpmath precision."""
    feed = mp.e ** (-mp.mpf(repr(p.kappa)))
    reaction = (x1 + 1) ** mp.mpf(repr(p.n_bar)) * mp.e ** (
        -mp.mpf(repr(p.kappa)) / (x2 + 1))
    k1, k2 = mp.mpf(repr(p.k1)), mp.mpf(repr(p.k2))
    if variant == "corrected":
        r1, r2 = k1 * reaction, k2 * reaction
    else:
        r1 = r2 = reaction
    f1 = -mp.mpf(repr(p.phi1)) * x1 + k1 * feed - r1 + u1
    f2 = -mp.mpf(repr(p.phi2)) * x2 + k2 * feed - r2 + u2
    return f1, f2


def test_rhs_matches_high_precision_evaluation():
    x = (-0.065, 0.008)
    u = (0.3, -0.01)
    with mp.workdps(50):
        want = _rhs_mp(mp.mpf("-0.065"), mp.mpf("0.008"),
                       mp.mpf("0.3"), mp.mpf("-0.01"), P)
        got = cstr_rhs(np.array(x), np.array(u), P)
        for g, w in zip(got, want):
            assert abs(mp.mpf(float(g)) - w) / abs(w) < mp.mpf("1e-14")


def test_origin_is_equilibrium_only_in_corrected_form():
    f = cstr_rhs(np.zeros(2), np.zeros(2), P)
    assert np.max(np.abs(f)) <= 1e-14
    f_printed = cstr_rhs(np.zeros(2), np.zeros(2),
                         P.with_variant("printed"))
    # the unscaled reaction term does not cancel the feed term
    assert np.min(np.abs(f_printed)) > 1e-3


def test_jacobian_matches_high_precision_derivative():
    # central difference with a 1e-25 step at 60 digits keeps ~35 exact
    # digits, far beyond the 1e-12 comparison
    J = cstr_jacobian(np.array([-0.065, 0.008]), np.array([0.3, -0.01]), P)
    with mp.workdps(60):
        x = [mp.mpf("-0.065"), mp.mpf("0.008")]
        u = (mp.mpf("0.3"), mp.mpf("-0.01"))
        h = mp.mpf("1e-25")
        for j in range(2):
            xp, xm = list(x), list(x)
            xp[j] += h
            xm[j] -= h
            fp = _rhs_mp(xp[0], xp[1], u[0], u[1], P)
            fm = _rhs_mp(xm[0], xm[1], u[0], u[1], P)
            for i in range(2):
                want = (fp[i] - fm[i]) / (2 * h)
                rel = abs(mp.mpf(float(J[i, j])) - want) / abs(want)
                assert rel < mp.mpf("1e-12"), (i, j, rel)


@given(
    x1=st.floats(-0.9, 3.0),
    x2=st.floats(-0.3, 0.5),
    u1=st.floats(-1.798, 1.798),
    u2=st.floats(-0.06663, 0.06663),
)
def test_jacobian_consistent_with_finite_differences(x1, x2, u1, u2):
    x = np.array([x1, x2])
    u = np.array([u1, u2])
    J = cstr_jacobian(x, u, P)
    h = 1e-7
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd = (cstr_rhs(x + e, u, P) - cstr_rhs(x - e, u, P)) / (2 * h)
        scale = np.maximum(np.abs(J[:, j]), 1.0)
        assert np.max(np.abs(fd - J[:, j]) / scale) < 5e-5


@given(
    x1=st.floats(-0.9, 3.0),
    x2=st.floats(-0.5, 0.5),
    phi=st.floats(0.2, 4.0),
)
def test_equal_time_constants_pin_one_eigenvalue(x1, x2, phi):
    # with phi1 = phi2 = phi the Jacobian is -phi*I plus a rank-one
    # term, so -phi is always in the spectrum
    p = CstrParams(phi1=phi, phi2=phi)
    info = spectral_info(cstr_jacobian(np.array([x1, x2]), np.zeros(2), p))
    # near-degenerate spectra lose ~half the float digits to the sqrt of
    # a cancelled discriminant, hence the loose absolute tolerance
    assert min(abs(lam - (-phi)) for lam in info.eigenvalues) < 1e-6


def test_spectral_info_complex_pair():
    info = spectral_info(np.array([[0.0, 1.0], [-1.0, 0.0]]))
    lams = sorted(info.eigenvalues, key=lambda z: z.imag)
    assert lams[0] == pytest.approx(-1j)
    assert lams[1] == pytest.approx(1j)
    assert not info.hurwitz


def test_domain_is_enforced():
    assert not in_domain((-1.0, 0.0))
    with pytest.raises(DomainError):
        cstr_rhs(np.array([-1.1, 0.0]), np.zeros(2), P)
    with pytest.raises(DomainError):
        cstr_jacobian(np.array([0.0, -1.0]), np.zeros(2), P)


@given(
    u1=st.floats(-1.798, 1.798),
    u2=st.floats(-0.06663, 0.06663),
)
def test_steady_state_residual_over_input_box(u1, u2):
    u = np.array([u1, u2])
    x = steady_state_map(u, P)
    assert float(np.linalg.norm(cstr_rhs(x, u, P))) <= 1e-12
    assert in_domain(x)


def test_steady_state_stable_across_box_corners():
    for u1 in (-P.u1_max, 0.0, P.u1_max):
        for u2 in (-P.u2_max, 0.0, P.u2_max):
            info = steady_state_stability(np.array([u1, u2]), P)
            assert info.hurwitz


def test_steady_state_map_reports_lost_branch():
    # for strong enough heating the reactant branch terminates (x1 pinned
    # against -1); the solver must say so, not return a pseudo-root
    with pytest.raises((SteadyStateError, DomainError)):
        steady_state_map(np.array([0.0, 2.0]), P)


def test_continuation_matches_individual_solves():
    us = np.column_stack([
        np.linspace(-1.0, 1.0, 11),
        np.linspace(-0.05, 0.05, 11),
    ])
    path = steady_state_continuation(us, P)
    for u, x in zip(us, path):
        assert np.allclose(x, steady_state_map(u, P), atol=1e-10)


def test_warm_start_agrees_with_cold_start():
    u = np.array([1.2, -0.03])
    cold = steady_state_map(u, P)
    warm = steady_state_map(u, P, x0=cold + 0.01)
    assert np.max(np.abs(cold - warm)) < 1e-10


def test_params_validation():
    with pytest.raises(ValueError):
        CstrParams(kappa=-1.0)
    with pytest.raises(ValueError):
        CstrParams(variant="imagined")
    with pytest.raises(ValueError):
        CstrParams(u1_min=2.0, u1_max=-2.0)
