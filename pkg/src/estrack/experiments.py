"""Canonical experiment definitions shared by the CLI and the test suite.

Everything here is a frozen convention: the tracking demonstrations, the
window-deviation comparison, and the one-window contraction probe are
each defined once so that `estrack verify`, the acceptance tests, and
the bundled configs all run the identical computation.

Conventions worth knowing before editing:

* Tracking runs start on the reference orbit plus a small state
  perturbation, with the controller input at zero.  The first period of
  the switching reference is therefore systematically cheap: the input
  starts half the box diagonal away from the active level instead of a
  full swing, and that head start is visible in the per-period cost.

* The window-deviation run uses gamma = 40 rather than the tracking
  gain. The input-only auxiliary system evaluates the steady-state map
  along its whole dither excursion, and at the tracking gains that
  excursion leaves the map's domain (the second input channel is
  amplified ~11x into a state that must stay above -1).  Gains with
  epsilon*gamma^2 of order one keep the excursion inside the domain
  while leaving a measurable eta-trend.

* All fixed steps are chosen so halving them moves the measured
  quantities by less than their decision margins.
"""

from __future__ import annotations

import numpy as np

from .analysis import ContractionProbe, TrackingReport, contraction_probe, \
    tracking_report
from .controller import ESGains
from .integrate import IntegratorConfig, Trajectory, integrate_closed_loop, \
    integrate_reduced
from .plant import CstrParams, steady_state_map
from .reference import ReferenceSpec, ReferenceTrajectory, make_reference

__all__ = [
    "TRACKING_GAINS", "TRACKING_DX", "TRACKING_T_END", "TRACKING_RHO",
    "tracking_run",
    "DEVIATION_GAMMA", "DEVIATION_EPSILON", "DEVIATION_ETAS",
    "DEVIATION_U0", "window_deviations",
    "CONTRACTION_GAINS", "CONTRACTION_RHO_PRIME", "CONTRACTION_R_MAX",
    "CONTRACTION_SEED", "contraction_run",
]


# ---------------------------------------------------------------------------
# closed-loop tracking demonstrations (both reference waveforms)

TRACKING_GAINS = ESGains(gamma=150.0, epsilon=1e-3, eta=1.0)
TRACKING_DX = (0.05, 0.005)
TRACKING_T_END = 200.0          # two reference periods
TRACKING_RHO = 0.25             # empirical bound level, frozen


def tracking_run(waveform: str, p: CstrParams | None = None,
                 ) -> tuple[Trajectory, TrackingReport, ReferenceTrajectory]:
    if p is None:
        p = CstrParams()
    spec = ReferenceSpec(waveform=waveform)
    ref = make_reference(spec, p)
    icfg = IntegratorConfig(method="rk4", dt=1e-3, samples_per_period=2000)
    x0 = ref.state_at(0.0) + np.asarray(TRACKING_DX)
    traj = integrate_closed_loop(x0, np.zeros(2), ref, TRACKING_GAINS, p,
                                 icfg, TRACKING_T_END)
    report = tracking_report(traj, ref, TRACKING_GAINS, p, rho=TRACKING_RHO)
    return traj, report, ref


# ---------------------------------------------------------------------------
# deviation between the closed loop and the input-only auxiliary system
# over one averaging window, for a widening window

DEVIATION_GAMMA = 40.0
DEVIATION_EPSILON = 1e-3
DEVIATION_ETAS = (1.0, 5.0, 25.0)
DEVIATION_U0 = (0.3, 0.01)
_DEVIATION_DT = 2.5e-6          # halving this moves results < 2e-4 relative


def window_deviations(p: CstrParams | None = None,
                      etas=DEVIATION_ETAS) -> dict[float, float]:
    """||u(w) - u_bar(w)|| at the end of one window w = eta*epsilon.

    The closed loop and the auxiliary system start from the same input,
    with the plant pre-settled on the steady-state map so the comparison
    isolates the averaging error rather than the plant transient.
    """
    if p is None:
        p = CstrParams()
    ref = make_reference(ReferenceSpec(), p)
    u0 = np.asarray(DEVIATION_U0)
    x0 = steady_state_map(u0, p)
    icfg = IntegratorConfig(method="rk4", dt=_DEVIATION_DT,
                            samples_per_period=2000)
    out = {}
    for eta in etas:
        g = ESGains(gamma=DEVIATION_GAMMA, epsilon=DEVIATION_EPSILON, eta=eta)
        w = g.eta * g.epsilon
        full = integrate_closed_loop(x0, u0, ref, g, p, icfg, w)
        red = integrate_reduced(u0, ref, g, p, icfg, w)
        out[eta] = float(np.linalg.norm(full.u[-1] - red.final_input()))
    return out


# ---------------------------------------------------------------------------
# one-window contraction probe on the auxiliary system

# epsilon*gamma^2 = 0.95: the empirical optimum of the contraction
# fraction over the whole admissible gain range (see the probe docstring
# and the acceptance suite for what limits it on this plant)
CONTRACTION_GAINS = ESGains(gamma=float(np.sqrt(95.0)), epsilon=0.01, eta=1.0)
CONTRACTION_RHO_PRIME = 0.25
CONTRACTION_R_MAX = 0.6
CONTRACTION_SEED = 20260816


def contraction_run(p: CstrParams | None = None,
                    n_samples: int = 100) -> ContractionProbe:
    if p is None:
        p = CstrParams()
    ref = make_reference(ReferenceSpec(), p)
    return contraction_probe(ref, CONTRACTION_GAINS, p,
                             CONTRACTION_RHO_PRIME, CONTRACTION_R_MAX,
                             n_samples=n_samples, seed=CONTRACTION_SEED)


# ---------------------------------------------------------------------------
# config-driven runs (the CLI's run and sweep verbs)

def run_from_config(cfg, gains: ESGains | None = None):
    """Execute one experiment exactly as an ExperimentConfig describes it.

    `gains` overrides the config's [gains] table for sweep cells; all
    other settings come from the config.  Returns (trajectory, report,
    reference); when the trajectory is too short to report on (horizon
    under two windows, or truncated by a domain exit) the report slot
    holds the ValueError instead, so callers keep the trajectory and the
    reason together.  Kept module-level so sweep workers can import it
    by name.
    """
    p = cfg.plant
    ref = make_reference(cfg.reference, p)
    g = gains if gains is not None else cfg.gains
    if cfg.x0 is not None:
        x0 = np.asarray(cfg.x0, dtype=float)
    else:
        x0 = ref.state_at(cfg.t0) + np.asarray(cfg.dx, dtype=float)
    traj = integrate_closed_loop(
        x0, np.asarray(cfg.u0, dtype=float), ref, g, p, cfg.integrator,
        cfg.t_end, t0=cfg.t0, pin_reference_input=cfg.pin_reference_input,
        clamp_inputs=cfg.clamp_inputs)
    try:
        report = tracking_report(traj, ref, g, p, rho=cfg.rho,
                                 window=cfg.window)
    except ValueError as exc:
        status = traj.meta.get("status", "ok")
        if status != "ok":
            exc = ValueError(f"integration ended early ({status}) at "
                             f"t = {traj.meta.get('t_reached'):g}: {exc}")
        report = exc
    return traj, report, ref
