"""Steady-state curve cache, tracking reports, probes, sweep tables."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from estrack.analysis import (
    AssumptionProbe,
    TrackingReport,
    contraction_probe,
    per_period_cost,
    probe_assumption3,
    sample_input_annulus,
    steady_state_curve,
    sweep_summary,
    tracking_report,
    write_sweep_csv,
)
from estrack.controller import ESGains
from estrack.integrate import IntegratorConfig, Trajectory, \
    integrate_closed_loop
from estrack.plant import CstrParams, steady_state_map
from estrack.reference import ReferenceSpec, make_reference, reference_input

P = CstrParams()


@pytest.fixture(scope="module")
def trig_ref():
    return make_reference(ReferenceSpec(), P)


@pytest.fixture(scope="module")
def bang_ref():
    return make_reference(ReferenceSpec(waveform="bang"), P)


@pytest.fixture(scope="module")
def short_ref():
    # two-time-unit period keeps report tests at a few thousand steps
    return make_reference(ReferenceSpec(period=2.0), P)


def _synthetic(t, offset):
    """Trajectory with x_star = 0 and x = offset(t), so y = ||offset||^2."""
    t = np.asarray(t, dtype=float)
    x = np.stack([offset(t), np.zeros_like(t)], axis=1)
    return Trajectory(t=t, x=x, u=np.zeros((t.size, 2)),
                      x_star=np.zeros((t.size, 2)), meta={"status": "ok"})


# -- steady-state curve ------------------------------------------------------

def test_curve_matches_fresh_solves_at_nodes(trig_ref):
    curve = steady_state_curve(trig_ref, P)
    for phi, val in zip(curve.phases[::512], curve.values[::512]):
        fresh = steady_state_map(reference_input(float(phi), trig_ref.spec), P)
        assert np.max(np.abs(val - fresh)) < 1e-10


def test_curve_interpolates_between_nodes(trig_ref):
    curve = steady_state_curve(trig_ref, P)
    for t in (0.123456, 37.7, 88.881):
        fresh = steady_state_map(reference_input(t, trig_ref.spec), P)
        assert np.max(np.abs(curve(t) - fresh)) < 1e-8


def test_curve_is_periodic(trig_ref):
    curve = steady_state_curve(trig_ref, P)
    T = trig_ref.spec.period
    for t in (0.4, 55.0):
        assert np.max(np.abs(curve(t) - curve(t + 7 * T))) < 1e-9


def test_curve_vectorized_shape(trig_ref):
    curve = steady_state_curve(trig_ref, P)
    out = curve(np.linspace(0.0, 300.0, 17))
    assert out.shape == (17, 2)


def test_bang_curve_takes_level_values(bang_ref):
    curve = steady_state_curve(bang_ref, P)
    spec = bang_ref.spec
    up = steady_state_map(spec.amplitudes, P)        # sign +1: a * 1
    dn = steady_state_map(-spec.amplitudes, P)
    assert np.max(np.abs(curve(25.0) - up)) < 1e-12
    assert np.max(np.abs(curve(75.0) - dn)) < 1e-12
    # sin = 0 exactly at the switch phases: input 0, equilibrium 0
    assert np.array_equal(curve(0.0), np.zeros(2))
    assert np.array_equal(curve(50.0), np.zeros(2))


# -- per-period cost ---------------------------------------------------------

def test_per_period_cost_constant_offset():
    t = np.linspace(0.0, 3.0, 301)
    traj = _synthetic(t, lambda t: np.full_like(t, 0.3))
    costs = per_period_cost(traj, 1.0)
    assert costs.shape == (3,)
    assert np.allclose(costs, 0.3, rtol=1e-14)


def test_per_period_cost_zero_cost():
    t = np.linspace(0.0, 2.0, 101)
    traj = _synthetic(t, lambda t: np.zeros_like(t))
    assert np.array_equal(per_period_cost(traj, 1.0), np.zeros(2))


def test_per_period_cost_counts_only_full_periods():
    t = np.linspace(0.0, 2.5, 251)
    traj = _synthetic(t, lambda t: np.full_like(t, 1.0))
    assert per_period_cost(traj, 1.0).shape == (2,)


def test_per_period_cost_validation():
    t = np.linspace(0.0, 0.5, 51)
    traj = _synthetic(t, lambda t: np.zeros_like(t))
    with pytest.raises(ValueError):
        per_period_cost(traj, 1.0)
    with pytest.raises(ValueError):
        per_period_cost(traj, 0.0)


@given(amp=st.floats(0.0, 2.0), freq=st.floats(0.1, 4.0))
def test_per_period_cost_bounded_by_signal_range(amp, freq):
    t = np.linspace(0.0, 4.0, 801)
    s = amp * (1.0 + 0.5 * np.sin(freq * t))
    traj = _synthetic(t, lambda tt: s)
    costs = per_period_cost(traj, 2.0)
    assert np.all(costs >= s.min() - 1e-12)
    assert np.all(costs <= s.max() + 1e-12)


# -- tracking report ---------------------------------------------------------

@pytest.fixture(scope="module")
def short_run(short_ref):
    gains = ESGains(gamma=2.0, epsilon=0.01, eta=1.0)
    icfg = IntegratorConfig(method="rk4", dt=1e-4, samples_per_period=400)
    x0 = short_ref.state_at(0.0) + np.array([0.02, 0.002])
    traj = integrate_closed_loop(x0, np.zeros(2), short_ref, gains, P, icfg,
                                 4.0)
    assert traj.completed
    return traj, gains


def test_report_settles_for_generous_rho(short_run, short_ref):
    traj, gains = short_run
    rep = tracking_report(traj, short_ref, gains, P, rho=5.0)
    assert rep.bound_satisfied
    assert rep.t_f == traj.t[0]
    assert rep.sup_error_after_tf <= 5.0
    assert rep.sup_ref_error_after_tf >= 0.0
    assert rep.n_samples == traj.t.size
    assert len(rep.mean_sqrt_cost_per_period) == 2


def test_report_finds_no_window_for_impossible_rho(short_run, short_ref):
    traj, gains = short_run
    rep = tracking_report(traj, short_ref, gains, P, rho=0.0)
    assert not rep.bound_satisfied
    assert math.isnan(rep.t_f)
    assert math.isnan(rep.sup_error_after_tf)
    # per-period costs are reported regardless
    assert len(rep.mean_sqrt_cost_per_period) == 2


def test_report_tail_sup_consistent(short_run, short_ref):
    traj, gains = short_run
    rep = tracking_report(traj, short_ref, gains, P, rho=5.0)
    # satisfied bound implies the tail sup is at or under rho
    assert rep.sup_error_after_tf <= rep.rho + 1e-12


def test_report_requires_two_windows(short_run, short_ref):
    traj, gains = short_run
    with pytest.raises(ValueError):
        tracking_report(traj, short_ref, gains, P, rho=1.0, window=3.0)
    with pytest.raises(ValueError):
        tracking_report(traj, short_ref, gains, P, rho=1.0, window=-1.0)


def test_report_to_dict_round_trip(short_run, short_ref):
    traj, gains = short_run
    rep = tracking_report(traj, short_ref, gains, P, rho=5.0)
    d = rep.to_dict()
    assert d["rho"] == rep.rho
    assert d["bound_satisfied"] is rep.bound_satisfied
    assert d["mean_sqrt_cost_per_period"] == \
        list(rep.mean_sqrt_cost_per_period)


# -- assumption probe --------------------------------------------------------

def test_probe_reports_exact_input_diameter(trig_ref):
    spec = trig_ref.spec
    t_grid = np.array([0.0, 0.25, 0.5, 0.75]) * spec.period
    u_grid = np.array([[0.3, 0.01], [-0.5, -0.02], [1.0, 0.05]])
    probe = probe_assumption3(trig_ref, P, u_grid, t_grid)
    want = 2.0 * math.hypot(abs(spec.a1), abs(spec.a2))
    assert probe.nu_hat == pytest.approx(want, abs=1e-10)
    assert probe.alpha11_hat <= probe.alpha12_hat
    assert probe.n_ratio_samples > 0


def test_probe_lipschitz_constant_of_distance_cost(trig_ref):
    # sqrt(h) is a distance to a point, so its x-Lipschitz constant is 1;
    # the sampled estimate approaches it and can never exceed it
    g1 = np.linspace(-1.5, 1.5, 7)
    u_grid = np.array([(a, 0.0) for a in g1])
    t_grid = np.linspace(0.0, 100.0, 5, endpoint=False)
    probe = probe_assumption3(trig_ref, P, u_grid, t_grid)
    assert probe.L_h_hat <= 1.0 + 1e-12
    assert probe.L_h_hat > 0.9


def test_probe_excludes_coincident_points(trig_ref):
    u_grid = np.array([reference_input(0.0, trig_ref.spec)])
    with pytest.raises(ValueError):
        probe_assumption3(trig_ref, P, u_grid, np.array([0.0]))
    with pytest.raises(ValueError):
        probe_assumption3(trig_ref, P, np.empty((0, 2)), np.array([0.0]))


def test_probe_invariant_enforced():
    with pytest.raises(ValueError):
        AssumptionProbe(alpha11_hat=2.0, alpha12_hat=1.0, L_h_hat=1.0,
                        nu_hat=1.0, n_u_samples=1, n_t_samples=1,
                        n_ratio_samples=1, grid_note="")


# -- annulus sampler and contraction probe -----------------------------------

def test_annulus_sampler_respects_geometry():
    rng = np.random.default_rng(7)
    pts = sample_input_annulus(rng, 0.25, 0.6, 500)
    rr = np.hypot(pts[:, 0], pts[:, 1])
    assert np.all(rr >= 0.25) and np.all(rr <= 0.6)
    aspect = 0.06663 / 1.798
    assert np.all(np.abs(pts[:, 1]) <= aspect * 0.6 + 1e-15)


def test_annulus_sampler_is_seed_deterministic():
    a = sample_input_annulus(np.random.default_rng(3), 0.2, 0.5, 64)
    b = sample_input_annulus(np.random.default_rng(3), 0.2, 0.5, 64)
    assert np.array_equal(a, b)


def test_annulus_sampler_validation():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        sample_input_annulus(rng, 0.5, 0.5, 4)
    with pytest.raises(ValueError):
        sample_input_annulus(rng, 0.0, 0.5, 4)


def test_contraction_probe_bookkeeping(trig_ref):
    gains = ESGains(gamma=math.sqrt(95.0), epsilon=0.01, eta=1.0)
    probe = contraction_probe(trig_ref, gains, P, 0.25, 0.6, n_samples=20,
                              seed=11)
    assert probe.n_samples == 20
    assert probe.n_contracted + len(probe.failures) == 20
    assert probe.fraction == probe.n_contracted / 20
    for u0, ratio in probe.failures:
        assert len(u0) == 2
        assert ratio >= 1.0 or math.isinf(ratio)


def test_contraction_probe_deterministic(trig_ref):
    gains = ESGains(gamma=math.sqrt(95.0), epsilon=0.01, eta=1.0)
    a = contraction_probe(trig_ref, gains, P, 0.25, 0.6, n_samples=10, seed=5)
    b = contraction_probe(trig_ref, gains, P, 0.25, 0.6, n_samples=10, seed=5)
    assert a.n_contracted == b.n_contracted
    assert a.failures == b.failures


# -- sweep aggregation -------------------------------------------------------

def _mk_report(first, last, satisfied=True, t_f=1.0):
    return TrackingReport(rho=0.25, t_f=t_f, sup_error_after_tf=0.2,
                          mean_sqrt_cost_per_period=(first, last),
                          bound_satisfied=satisfied, window=100.0,
                          t_end=200.0, sup_ref_error_after_tf=0.2,
                          n_samples=100)


def test_sweep_summary_orders_and_flags():
    g = lambda gm, ep: ESGains(gamma=gm, epsilon=ep, eta=1.0)
    rows = sweep_summary([
        (g(150.0, 0.002), _mk_report(0.03, 0.01)),
        (g(150.0, 0.001), _mk_report(0.03, 0.05)),        # cost got worse
        (g(100.0, 0.001), _mk_report(0.03, 0.01, satisfied=False)),
        (g(100.0, 0.002), RuntimeError("cell blew up")),
    ])
    assert [(r["gamma"], r["epsilon"]) for r in rows] == \
        [(100.0, 0.001), (100.0, 0.002), (150.0, 0.001), (150.0, 0.002)]
    assert [r["degraded"] for r in rows] == [True, True, True, False]
    assert rows[1]["status"] == "RuntimeError"
    assert math.isnan(rows[1]["t_f"])
    assert rows[3]["status"] == "ok"


def test_sweep_csv_layout(tmp_path):
    rows = sweep_summary([
        (ESGains(gamma=150.0, epsilon=0.001, eta=1.0),
         _mk_report(0.026443290030752898, 0.02)),
    ])
    path = tmp_path / "sweep.csv"
    write_sweep_csv(rows, path)
    text = path.read_text().splitlines()
    assert text[0] == ("gamma,epsilon,eta,status,bound_satisfied,t_f,"
                       "sup_error_after_tf,first_period_cost,"
                       "final_period_cost,degraded")
    cells = text[1].split(",")
    assert cells[3] == "ok"
    assert cells[4] == "true" and cells[-1] == "false"
    # floats carry full precision
    assert cells[7] == "0.026443290030752898"
