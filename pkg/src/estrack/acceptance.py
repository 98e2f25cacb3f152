"""Acceptance checks: the numbered, tolerance-bearing claims this package
makes about itself.

Each check is a plain function returning a CheckResult, so the CLI's
`verify` verb and the test suite run literally the same code and print
the same measured numbers.  Frozen constants here (expected Jacobian,
orbit anchor, per-period cost baselines) are regression locks: the
baselines were produced by this package's own canonical runs and pin
determinism, they are not external truths.

Checks 4 and 6 document genuine shortfalls rather than passing:

* The switching-reference tracking run ends its second period costlier
  than its first.  The loop tracks (the input locks onto the switching
  levels and the measured cost returns to zero between switches); the
  first period is simply cheaper because the zero initial input starts
  half a box-diagonal from the first level, while every later period
  pays for two full swings.  A decreasing per-period cost is the wrong
  signature for this waveform under the zero-input start convention.

* The one-window contraction probe peaks near 91/100 against a required
  95/100.  The steady-state map's 11x channel anisotropy makes the
  averaged input drift a gradient flow with a ~48000:1 stiffness ratio:
  in the mandated gain range the stiff channel's dither excursion
  modulates the controller's log-cost phase by several radians, which
  breaks the averaging coherence and leaves an outward bias on part of
  the sample annulus.  No admissible gain/radius combination reaches
  95% (measured ceiling 92/100, seed spread +/-3).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

__all__ = ["CheckResult", "CHECKS", "SUITES", "run_check", "run_suite"]


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    elapsed: float
    budget: float
    lines: list = field(default_factory=list)

    @property
    def in_budget(self) -> bool:
        return self.elapsed < self.budget

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] criterion {self.number} ({self.name}): "
                f"{self.elapsed:.2f}s / budget {self.budget:.0f}s")

    def report(self) -> str:
        return "\n".join([self.summary()] + [f"    {ln}" for ln in self.lines])


# frozen regression baselines: per-period mean sqrt(cost) of the two
# canonical tracking runs (first period, second period)
TRACKING_BASELINE = {
    "trig": (0.026443290030752898, 0.02012101436910399),
    "bang": (0.026516626318991071, 0.032537364390943346),
}

EXPECTED_JACOBIAN = ((-2.115412260, -19.82087587),
                     (0.01723243894, -0.6937795600))
EXPECTED_EIGENVALUES = (-1.0, -1.809)
TRIG_ORBIT_ANCHOR = (-0.065, 0.008)


def _warm_kernels():
    """One tiny integration so JIT compilation never lands in a timing."""
    import numpy as np
    from .integrate import IntegratorConfig, integrate_plant_constant_u
    from .plant import CstrParams
    icfg = IntegratorConfig(method="rk4", dt=1e-3, samples_per_period=2000)
    integrate_plant_constant_u(np.zeros(2), np.zeros(2), CstrParams(), icfg,
                               1e-2, n_samples=2)


def check_1_jacobian() -> CheckResult:
    import numpy as np
    from .plant import CstrParams, cstr_jacobian, spectral_info
    t0 = time.perf_counter()
    p = CstrParams()
    info = spectral_info(cstr_jacobian(np.zeros(2), np.zeros(2), p))
    A = info.jacobian
    lines = []
    ok = True
    for i in range(2):
        for j in range(2):
            want = EXPECTED_JACOBIAN[i][j]
            rel = abs(A[i, j] - want) / abs(want)
            ok &= rel <= 1e-6
            lines.append(f"A[{i}{j}] = {A[i, j]:+.10g} (rel err {rel:.2e})")
    eigs = sorted(e.real for e in info.eigenvalues)
    for got, want in zip(eigs, sorted(EXPECTED_EIGENVALUES)):
        ok &= abs(got - want) <= 1e-2
        lines.append(f"eigenvalue {got:+.6f} vs {want:+.3f} "
                     f"(abs err {abs(got - want):.2e})")
    ok &= info.hurwitz
    res = CheckResult(1, "jacobian", ok, time.perf_counter() - t0, 1.0, lines)
    res.passed &= res.in_budget
    return res


def check_2_steady_state() -> CheckResult:
    import numpy as np
    from .integrate import IntegratorConfig, integrate_plant_constant_u
    from .plant import CstrParams, cstr_rhs, steady_state_map
    _warm_kernels()
    t0 = time.perf_counter()
    p = CstrParams()
    lines = []
    f0 = cstr_rhs(np.zeros(2), np.zeros(2), p)
    ok = bool(np.max(np.abs(f0)) <= 1e-14)
    lines.append(f"|f(0,0)| = {np.max(np.abs(f0)):.2e} (<= 1e-14)")

    icfg = IntegratorConfig(method="rk4", dt=1e-3, samples_per_period=2000)
    worst_res = 0.0
    worst_dev = 0.0
    for u1 in np.linspace(-p.u1_max, p.u1_max, 5):
        for u2 in np.linspace(-p.u2_max, p.u2_max, 5):
            u = np.array([u1, u2])
            xs = steady_state_map(u, p)
            worst_res = max(worst_res,
                            float(np.max(np.abs(cstr_rhs(xs, u, p)))))
            traj = integrate_plant_constant_u(np.zeros(2), u, p, icfg, 40.0,
                                              n_samples=2)
            worst_dev = max(worst_dev,
                            float(np.max(np.abs(traj.final_state() - xs))))
    ok &= worst_res <= 1e-12 and worst_dev <= 1e-6
    lines.append(f"5x5 grid worst Newton residual = {worst_res:.2e} (<= 1e-12)")
    lines.append(f"5x5 grid worst |integration - Newton| = {worst_dev:.2e} "
                 f"(<= 1e-6)")
    res = CheckResult(2, "steady-state map", ok, time.perf_counter() - t0,
                      10.0, lines)
    res.passed &= res.in_budget
    return res


def check_3_periodic_orbit() -> CheckResult:
    import numpy as np
    from .plant import CstrParams
    from .reference import ReferenceSpec, make_reference
    _warm_kernels()
    t0 = time.perf_counter()
    p = CstrParams()
    lines = []

    ref = make_reference(ReferenceSpec(waveform="trig"), p)
    anchor_err = float(np.linalg.norm(ref.x_star_0 - np.asarray(TRIG_ORBIT_ANCHOR)))
    defect = ref.periodicity_defect(1)
    ok = anchor_err <= 5e-3 and defect <= 1e-8
    lines.append(f"trig x0 = ({ref.x_star_0[0]:+.8f}, {ref.x_star_0[1]:+.8f}),"
                 f" |x0 - anchor| = {anchor_err:.2e} (<= 5e-3)")
    lines.append(f"trig one-period defect = {defect:.2e} (<= 1e-8)")

    refb = make_reference(ReferenceSpec(waveform="bang"), p)
    d1 = refb.periodicity_defect(1)
    d2 = refb.periodicity_defect(2)
    ok &= d1 <= 1e-8 and d2 <= 1e-8
    lines.append(f"bang one-period defect = {d1:.2e}, two-period = {d2:.2e} "
                 f"(<= 1e-8)")
    res = CheckResult(3, "periodic orbit", ok, time.perf_counter() - t0,
                      30.0, lines)
    res.passed &= res.in_budget
    return res


def check_4_tracking() -> CheckResult:
    from .experiments import tracking_run
    _warm_kernels()
    t0 = time.perf_counter()
    lines = []
    ok = True
    for wf in ("trig", "bang"):
        t_run = time.perf_counter()
        traj, report, _ = tracking_run(wf)
        el = time.perf_counter() - t_run
        costs = report.mean_sqrt_cost_per_period
        first, last = costs[0], costs[-1]
        mono = last < first
        base = TRACKING_BASELINE[wf]
        rel = max(abs(first - base[0]) / base[0], abs(last - base[1]) / base[1])
        locked = rel <= 1e-10
        ok &= mono and locked and el < 600.0
        lines.append(f"{wf}: per-period mean sqrt(y) = "
                     f"{first:.17g} -> {last:.17g} "
                     f"({'decreasing' if mono else 'NOT decreasing'}), "
                     f"baseline rel dev {rel:.2e} (<= 1e-10), {el:.1f}s")
        if not mono and wf == "bang":
            lines.append("    known shortfall: the zero initial input makes "
                         "the first switching period systematically cheap; "
                         "the loop itself tracks (cost returns to zero "
                         "between switches)")
    res = CheckResult(4, "closed-loop tracking", ok,
                      time.perf_counter() - t0, 1200.0, lines)
    res.passed &= res.in_budget
    return res


def check_5_window_deviation() -> CheckResult:
    from .experiments import DEVIATION_ETAS, window_deviations
    _warm_kernels()
    t0 = time.perf_counter()
    devs = window_deviations()
    vals = [devs[e] for e in DEVIATION_ETAS]
    ok = all(a > b for a, b in zip(vals, vals[1:]))
    lines = [f"eta = {e:g}: ||u(w) - u_bar(w)|| = {devs[e]:.6e}"
             for e in DEVIATION_ETAS]
    lines.append("strictly decreasing across eta: " + ("yes" if ok else "NO"))
    res = CheckResult(5, "window deviation", ok, time.perf_counter() - t0,
                      120.0, lines)
    res.passed &= res.in_budget
    return res


def check_6_contraction() -> CheckResult:
    from .experiments import contraction_run
    _warm_kernels()
    t0 = time.perf_counter()
    probe = contraction_run()
    ok = probe.fraction >= 0.95
    g = probe.gains
    lines = [
        f"gains: gamma = {g.gamma:.6g}, epsilon = {g.epsilon:g}, "
        f"eta = {g.eta:g} (epsilon*gamma^2 = {g.epsilon * g.gamma ** 2:.3g})",
        f"annulus: {probe.rho_prime:g} <= ||u0 - u*(0)|| <= {probe.r_max:g}, "
        f"seed {probe.seed}",
        f"contracted {probe.n_contracted}/{probe.n_samples} "
        f"(required >= 95)",
    ]
    for u0, ratio in probe.failures:
        lines.append(f"failure: u0 = ({u0[0]:+.4f}, {u0[1]:+.5f}), "
                     f"growth ratio = {ratio:.4f}")
    res = CheckResult(6, "one-window contraction", ok,
                      time.perf_counter() - t0, 120.0, lines)
    res.passed &= res.in_budget
    return res


def check_7_integrator_order() -> CheckResult:
    import numpy as np
    from scipy.linalg import expm
    from .controller import ESGains
    from .integrate import IntegratorConfig, integrate_closed_loop, \
        integrate_linear
    from .plant import CstrParams, cstr_jacobian
    from .reference import ReferenceSpec, make_reference
    _warm_kernels()
    t0 = time.perf_counter()
    p = CstrParams()
    lines = []

    # smooth, gently dithered segment; three meshes in exact 2:1 ratio
    ref = make_reference(ReferenceSpec(), p)
    g = ESGains(gamma=2.0, epsilon=0.1, eta=1.0)
    u0 = np.array([0.1, 0.005])
    x0 = ref.state_at(0.0) + np.array([0.02, 0.002])
    finals = []
    for dt in (1e-3, 5e-4, 2.5e-4):
        icfg = IntegratorConfig(method="rk4", dt=dt, samples_per_period=2000)
        traj = integrate_closed_loop(x0, u0, ref, g, p, icfg, 1.0)
        finals.append(np.concatenate([traj.x[-1], traj.u[-1]]))
    e1 = float(np.linalg.norm(finals[0] - finals[1]))
    e2 = float(np.linalg.norm(finals[1] - finals[2]))
    order = math.log2(e1 / e2) if e2 > 0 else math.inf
    ok = order >= 3.5
    lines.append(f"step-halving errors {e1:.3e} -> {e2:.3e}, "
                 f"observed order = {order:.2f} (>= 3.5)")

    # adaptive integrator against the matrix exponential
    a = cstr_jacobian(np.zeros(2), np.zeros(2), p)
    z0 = np.array([0.3, -0.2])
    tol = 1e-10
    icfg = IntegratorConfig(method="rkf45", atol=tol, rtol=tol,
                            samples_per_period=2000)
    traj = integrate_linear(a, z0, icfg, 5.0, n_samples=2)
    exact = expm(a * 5.0) @ z0
    err = float(np.max(np.abs(traj.final_state() - exact)))
    ok &= err <= 10.0 * tol
    lines.append(f"adaptive vs matrix exponential: err = {err:.2e} "
                 f"(<= {10 * tol:.0e})")
    res = CheckResult(7, "integrator order", ok, time.perf_counter() - t0,
                      60.0, lines)
    res.passed &= res.in_budget
    return res


def check_8_controller_units() -> CheckResult:
    import numpy as np
    from .controller import ESGains, es_rate_bound, es_rhs
    t0 = time.perf_counter()
    lines = []
    unit = ESGains(gamma=1.0, epsilon=1.0, eta=1.0, n_u=2)

    v = es_rhs(0.3, 0.0, unit)
    ok = bool(np.all(v == 0.0))
    lines.append(f"zero cost -> zero rate: {v.tolist()}")

    v = es_rhs(0.0, 1.0, unit)
    ok &= bool(np.all(v == 0.0))
    lines.append(f"unit cost at t=0 (ln 1 = 0): {v.tolist()}")

    y = math.exp(math.pi / 2.0)
    v = es_rhs(0.0, y, ESGains(gamma=1.0, epsilon=1.0, eta=1.0, n_u=1))
    want = 2.0 * math.sqrt(math.pi * y)
    rel = abs(v[0] - want) / want
    ok &= rel <= 1e-12
    lines.append(f"quarter-phase cost: {v[0]:.15g} vs {want:.15g} "
                 f"(rel err {rel:.2e})")

    worst = 0.0
    for y in (1e-6, 1e-3, 0.5, 1.0, 7.3, 150.0):
        for t in (0.0, 0.17, 1.9, 42.0):
            for g in (unit, ESGains(gamma=150.0, epsilon=1e-3, eta=5.0)):
                r = float(np.linalg.norm(es_rhs(t, y, g)))
                b = es_rate_bound(y, g)
                worst = max(worst, r - b)
    ok &= worst <= 1e-12
    lines.append(f"rate bound slack: max(||rhs|| - bound) = {worst:.2e} "
                 f"(<= 1e-12)")
    res = CheckResult(8, "controller units", ok, time.perf_counter() - t0,
                      1.0, lines)
    res.passed &= res.in_budget
    return res


CHECKS = {
    1: check_1_jacobian,
    2: check_2_steady_state,
    3: check_3_periodic_orbit,
    4: check_4_tracking,
    5: check_5_window_deviation,
    6: check_6_contraction,
    7: check_7_integrator_order,
    8: check_8_controller_units,
}

SUITES = {
    "jacobian": (1,),
    "steady-state": (2,),
    "periodic-orbit": (3,),
    "tracking": (4,),
    "reduced-system": (5, 6),
}


def run_check(number: int) -> CheckResult:
    return CHECKS[number]()


def run_suite(name: str) -> list[CheckResult]:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; "
                       f"choose from {sorted(SUITES)}")
    return [run_check(n) for n in SUITES[name]]
