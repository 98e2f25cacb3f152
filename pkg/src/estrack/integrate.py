"""Integration drivers: mesh construction, run assembly, trajectory records.

The compiled steppers in _kernels advance node to node over a mesh that
already contains every output time and every event time (bang-bang
switches, averaging-window boundaries), so discontinuities never fall
inside a step and output samples are hit exactly, not interpolated.

Closed-loop and reduced runs enforce the resolution ceiling
dt <= eta*epsilon/50: the controller injects its dither at frequency
2*pi/(eta*epsilon) and an unresolved dither silently averages wrong.
A requested step above the ceiling is clamped and both values recorded
in the run metadata.

Domain exit is terminal but not an exception: the partial trajectory is
returned with status "domain_exit" so the failure can be inspected.
Step-size underflow in the adaptive driver and steady-state solver
failure in reduced runs do raise, carrying the failure point.
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

import numpy as np

from . import _kernels as _k
from .controller import ESGains
from .plant import CstrParams, DomainError, SteadyStateError, require_domain

if TYPE_CHECKING:
    from .reference import ReferenceSpec, ReferenceTrajectory

CSV_HEADER = "t,x1,x2,u1,u2,xs1,xs2,y"

# fraction of one dither period that a single step may cover
STEPS_PER_DITHER_PERIOD = 50

_STATUS_NAMES = {
    _k.STATUS_OK: "ok",
    _k.STATUS_DOMAIN_EXIT: "domain_exit",
    _k.STATUS_NOT_FINITE: "not_finite",
    _k.STATUS_STEADY_STATE_FAIL: "steady_state_fail",
    _k.STATUS_STEP_UNDERFLOW: "step_underflow",
    _k.STATUS_STEP_BUDGET: "step_budget",
}


class IntegrationError(RuntimeError):
    """Numerical failure that is not a plain domain exit."""


class StiffnessError(IntegrationError):
    """Adaptive step controller demanded a step below dt_min."""


@dataclass(frozen=True)
class IntegratorConfig:
    """Stepper selection and resolution settings.

    method "rk4" uses the fixed step dt (further capped by the dither
    ceiling on closed-loop runs); "rkf45" uses the embedded 4(5) pair
    with the given tolerances.  samples_per_period sets the output
    stride of reference-driven runs.
    """

    method: str = "rk4"
    dt: float = 1e-3
    atol: float = 1e-10
    rtol: float = 1e-10
    dt_min: float = 1e-12
    dt_max: float = 1.0
    h_init: float = 1e-4
    max_steps: float = 5e8
    samples_per_period: int = 2000

    def __post_init__(self):
        if self.method not in ("rk4", "rkf45"):
            raise ValueError(f"unknown integrator method {self.method!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not (self.atol > 0 and self.rtol > 0):
            raise ValueError("tolerances must be positive")
        if not (0 < self.dt_min <= self.dt_max):
            raise ValueError("need 0 < dt_min <= dt_max")
        if not self.h_init > 0:
            raise ValueError("h_init must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.samples_per_period < 1:
            raise ValueError("samples_per_period must be >= 1")


def _freeze(a: Optional[np.ndarray]) -> Optional[np.ndarray]:
    if a is not None:
        a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Trajectory:
    """Sampled run of the plant, optionally with controller and reference.

    x is the plant state, u the controller state (or held input), x_star
    the co-integrated reference state; u and x_star are None for runs
    that do not carry them.  The cost y is always recomputed from x and
    x_star, never stored.
    """

    t: np.ndarray
    x: np.ndarray
    u: Optional[np.ndarray] = None
    x_star: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        _freeze(self.t)
        _freeze(self.x)
        _freeze(self.u)
        _freeze(self.x_star)

    @property
    def completed(self) -> bool:
        return self.meta.get("status") == "ok"

    @property
    def y(self) -> np.ndarray:
        """Tracking cost ||x - x_star||^2 per sample."""
        if self.x_star is None:
            raise ValueError("run has no reference block, cost undefined")
        d = self.x - self.x_star
        return np.einsum("ij,ij->i", d, d)

    def final_state(self) -> np.ndarray:
        return self.x[-1].copy()

    def to_csv(self, path) -> None:
        """Write `t,x1,x2,u1,u2,xs1,xs2,y` rows at 17 significant digits.

        Missing blocks are written as nan columns so the header contract
        never changes shape.
        """
        n = self.t.shape[0]
        nan2 = np.full((n, 2), np.nan)
        u = self.u if self.u is not None else nan2
        xs = self.x_star if self.x_star is not None else nan2
        y = self.y if self.x_star is not None else np.full(n, np.nan)
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        for i in range(n):
            row = (self.t[i], self.x[i, 0], self.x[i, 1], u[i, 0], u[i, 1],
                   xs[i, 0], xs[i, 1], y[i])
            buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
        with open(path, "w") as fh:
            fh.write(buf.getvalue())


@dataclass(frozen=True)
class ReducedTrajectory:
    """Sampled run of the averaged input dynamics.

    u_bar is the reduced input state, x_star the co-integrated reference,
    x_frozen the reference state frozen at the current window start (the
    phase anchor of the averaged law).
    """

    t: np.ndarray
    u_bar: np.ndarray
    x_star: np.ndarray
    x_frozen: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        _freeze(self.t)
        _freeze(self.u_bar)
        _freeze(self.x_star)
        _freeze(self.x_frozen)

    @property
    def completed(self) -> bool:
        return self.meta.get("status") == "ok"

    def final_input(self) -> np.ndarray:
        return self.u_bar[-1].copy()

    def to_csv(self, path) -> None:
        buf = io.StringIO()
        buf.write("t,u1,u2,xs1,xs2\n")
        for i in range(self.t.shape[0]):
            row = (self.t[i], self.u_bar[i, 0], self.u_bar[i, 1],
                   self.x_star[i, 0], self.x_star[i, 1])
            buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
        with open(path, "w") as fh:
            fh.write(buf.getvalue())


def build_mesh(t0: float, t_end: float, out_times, events=(), copy_events=()):
    """Node mesh containing all output times and all event times.

    Output times within 1e-9 of an event are snapped onto it so the mesh
    has no sliver segments around switches.  Returns (nodes, rec_flags,
    copy_flags); rec marks output nodes, copy marks the copy_events.
    """
    if not t_end > t0:
        raise ValueError("need t_end > t0")
    out = np.unique(np.asarray(out_times, dtype=float))
    if out[0] < t0 or out[-1] > t_end:
        raise ValueError("output times must lie within [t0, t_end]")
    ev = np.unique(np.concatenate([
        np.asarray(events, dtype=float).ravel(),
        np.asarray(copy_events, dtype=float).ravel(),
    ])) if (len(events) or len(copy_events)) else np.empty(0)
    ev = ev[(ev >= t0) & (ev <= t_end)]
    if ev.size:
        idx = np.searchsorted(ev, out)
        lo = np.clip(idx - 1, 0, ev.size - 1)
        hi = np.clip(idx, 0, ev.size - 1)
        d_lo = np.abs(out - ev[lo])
        d_hi = np.abs(ev[hi] - out)
        nearest = np.where(d_lo <= d_hi, ev[lo], ev[hi])
        dist = np.minimum(d_lo, d_hi)
        out = np.unique(np.where(dist < 1e-9, nearest, out))
    nodes = np.union1d(out, ev)
    rec = np.isin(nodes, out).astype(np.uint8)
    cpy_vals = np.unique(np.asarray(copy_events, dtype=float).ravel()) \
        if len(copy_events) else np.empty(0)
    cpy = np.isin(nodes, cpy_vals).astype(np.uint8)
    return nodes, rec, cpy


def _pack_pars(
    p: CstrParams,
    gains: Optional[ESGains] = None,
    ref_spec: Optional["ReferenceSpec"] = None,
    *,
    clamp_inputs: bool = False,
    pin_reference_input: bool = False,
    const_u=None,
    linear_a=None,
    ss_tol: float = 1e-12,
    ss_max_iter: int = 50,
) -> np.ndarray:
    pars = np.zeros(_k.N_PARS)
    pars[_k.P_NBAR] = p.n_bar
    pars[_k.P_PHI1] = p.phi1
    pars[_k.P_PHI2] = p.phi2
    pars[_k.P_K1] = p.k1
    pars[_k.P_K2] = p.k2
    pars[_k.P_KAPPA] = p.kappa
    pars[_k.P_VARIANT] = 0.0 if p.variant == "corrected" else 1.0
    pars[_k.P_U1MIN] = p.u1_min
    pars[_k.P_U1MAX] = p.u1_max
    pars[_k.P_U2MIN] = p.u2_min
    pars[_k.P_U2MAX] = p.u2_max
    if gains is not None:
        pars[_k.P_GAMMA] = gains.gamma
        pars[_k.P_ETA] = gains.eta
        pars[_k.P_EPS] = gains.epsilon
        pars[_k.P_HFLOOR] = gains.h_floor
    if ref_spec is not None:
        pars[_k.P_WAVEFORM] = 0.0 if ref_spec.waveform == "trig" else 1.0
        pars[_k.P_PERIOD] = ref_spec.period
        pars[_k.P_A1] = ref_spec.a1
        pars[_k.P_A2] = ref_spec.a2
    pars[_k.P_CLAMP] = 1.0 if clamp_inputs else 0.0
    pars[_k.P_PIN] = 1.0 if pin_reference_input else 0.0
    if const_u is not None:
        pars[_k.P_CU1] = const_u[0]
        pars[_k.P_CU2] = const_u[1]
    if linear_a is not None:
        a = np.asarray(linear_a, dtype=float)
        pars[_k.P_A00] = a[0, 0]
        pars[_k.P_A01] = a[0, 1]
        pars[_k.P_A10] = a[1, 0]
        pars[_k.P_A11] = a[1, 1]
    pars[_k.P_SSTOL] = ss_tol
    pars[_k.P_SSMAXIT] = float(ss_max_iter)
    return pars


def _stats_dict(stats: np.ndarray, status: int, dim: int) -> dict:
    d = {
        "status": _STATUS_NAMES.get(status, f"unknown({status})"),
        "steps": int(stats[_k.S_STEPS]),
        "rhs_evals": int(stats[_k.S_EVALS]),
        "rejected_steps": int(stats[_k.S_REJECTED]),
        "t_reached": float(stats[_k.S_T_REACHED]),
        "max_step": float(stats[_k.S_MAX_H]),
    }
    if status != _k.STATUS_OK:
        d["failure_state"] = [float(stats[_k.S_FAIL_Z0 + q]) for q in range(dim)]
    return d


def _run_kernel(nodes, rec, cpy, z0, kind, pars, icfg: IntegratorConfig,
                dt_cap: Optional[float] = None):
    """Dispatch to the compiled stepper; returns (status, ts, zs, meta)."""
    dim = z0.shape[0]
    n_out = int(rec.sum())
    ts = np.empty(n_out)
    zs = np.empty((n_out, dim))
    stats = np.zeros(_k.N_STATS)
    z = z0.copy()
    wall = time.perf_counter()
    if icfg.method == "rk4":
        dt_used = icfg.dt if dt_cap is None else min(icfg.dt, dt_cap)
        status = _k.rk4_run(nodes, rec, cpy, dt_used, z, kind, pars, ts, zs, stats)
    else:
        dt_max = icfg.dt_max if dt_cap is None else min(icfg.dt_max, dt_cap)
        dt_min = min(icfg.dt_min, dt_max)
        h0 = min(icfg.h_init, dt_max)
        status = _k.rkf45_run(nodes, rec, cpy, z, kind, pars,
                              icfg.atol, icfg.rtol, dt_min, dt_max, h0,
                              float(icfg.max_steps), ts, zs, stats)
    wall = time.perf_counter() - wall
    n_rec = int(stats[_k.S_N_REC])
    meta = _stats_dict(stats, status, dim)
    meta["wall_time"] = wall
    meta["method"] = icfg.method
    if icfg.method == "rk4":
        meta["dt_requested"] = icfg.dt
        meta["dt_used"] = dt_used
    else:
        meta["dt_max_used"] = dt_max
    if status == _k.STATUS_STEP_UNDERFLOW:
        raise StiffnessError(
            f"step controller demanded h < dt_min={dt_min:g} at "
            f"t={meta['t_reached']:.6g} (state {meta['failure_state']})"
        )
    if status == _k.STATUS_STEP_BUDGET:
        raise IntegrationError(
            f"step budget {icfg.max_steps:g} exhausted at t={meta['t_reached']:.6g}"
        )
    return status, ts[:n_rec], zs[:n_rec], meta


def _bang_switch_times(t0: float, t_end: float, period: float) -> np.ndarray:
    half = period / 2.0
    k0 = int(np.floor(t0 / half)) + 1
    k1 = int(np.ceil(t_end / half))
    return np.arange(k0, k1) * half


def _reference_events(ref_spec, t0: float, t_end: float):
    if ref_spec.waveform == "bang":
        return _bang_switch_times(t0, t_end, ref_spec.period)
    return np.empty(0)


def _output_grid(t0, t_end, period, samples_per_period):
    n_out = max(2, int(round((t_end - t0) / period * samples_per_period)) + 1)
    return np.linspace(t0, t_end, n_out)


def integrate_closed_loop(
    x0,
    u0,
    ref: "ReferenceTrajectory",
    gains: ESGains,
    p: CstrParams,
    icfg: IntegratorConfig,
    t_end: float,
    *,
    t0: float = 0.0,
    pin_reference_input: bool = False,
    clamp_inputs: bool = False,
) -> Trajectory:
    """Simulate plant + controller + co-integrated reference as one ODE.

    State order [x, u, x_star].  The controller sees only the scalar cost
    ||x - x_star||^2.  With pin_reference_input the plant is fed u*(t)
    directly and the controller state is held at u0; starting from
    x0 = x*(t0) this makes x and x_star follow identical dynamics, the
    exact-tracking baseline.

    Domain exit returns the partial trajectory (check .completed);
    adaptive step underflow raises StiffnessError.
    """
    x0 = require_domain(x0)
    u0 = np.asarray(u0, dtype=float)
    spec = ref.spec
    w = gains.eta * gains.epsilon
    dt_cap = w / STEPS_PER_DITHER_PERIOD
    out_times = _output_grid(t0, t_end, spec.period, icfg.samples_per_period)
    events = _reference_events(spec, t0, t_end)
    nodes, rec, cpy = build_mesh(t0, t_end, out_times, events)
    xs0 = ref.state_at(t0)
    z0 = np.concatenate([x0, u0, xs0])
    pars = _pack_pars(p, gains, spec, clamp_inputs=clamp_inputs,
                      pin_reference_input=pin_reference_input)
    status, ts, zs, meta = _run_kernel(nodes, rec, cpy, z0, _k.KIND_CLOSED_LOOP,
                                       pars, icfg, dt_cap)
    meta.update(
        kind="closed_loop",
        t0=t0, t_end=t_end,
        x0=list(map(float, x0)), u0=list(map(float, u0)),
        pinned=pin_reference_input, clamped=clamp_inputs,
        dither_window=w,
    )
    return Trajectory(t=ts, x=zs[:, 0:2], u=zs[:, 2:4], x_star=zs[:, 4:6],
                      meta=meta)


def integrate_plant_constant_u(
    x0,
    u,
    p: CstrParams,
    icfg: IntegratorConfig,
    t_end: float,
    *,
    t0: float = 0.0,
    n_samples: int = 1001,
) -> Trajectory:
    """Open-loop plant run with frozen input (steady-state oracle)."""
    x0 = require_domain(x0)
    u = np.asarray(u, dtype=float)
    out_times = np.linspace(t0, t_end, max(2, n_samples))
    nodes, rec, cpy = build_mesh(t0, t_end, out_times)
    pars = _pack_pars(p, const_u=u)
    status, ts, zs, meta = _run_kernel(nodes, rec, cpy, x0.copy(),
                                       _k.KIND_PLANT_CONST, pars, icfg)
    meta.update(kind="plant_constant_u", t0=t0, t_end=t_end,
                u=list(map(float, u)))
    u_block = np.broadcast_to(u, (ts.shape[0], 2)).copy()
    return Trajectory(t=ts, x=zs, u=u_block, meta=meta)


def integrate_reference_plant(
    x0,
    ref_spec: "ReferenceSpec",
    p: CstrParams,
    icfg: IntegratorConfig,
    t_end: float,
    *,
    t0: float = 0.0,
    n_samples: int = 2,
    out_times=None,
) -> Trajectory:
    """Plant driven by the reference input program u*(t) alone.

    The workhorse of the periodic-orbit shooting map: n_samples=2 records
    just the endpoints.  An explicit out_times array (within [t0, t_end])
    overrides the uniform n_samples grid.
    """
    x0 = require_domain(x0)
    if out_times is None:
        out_times = np.linspace(t0, t_end, max(2, n_samples))
    events = _reference_events(ref_spec, t0, t_end)
    nodes, rec, cpy = build_mesh(t0, t_end, out_times, events)
    pars = _pack_pars(p, ref_spec=ref_spec)
    status, ts, zs, meta = _run_kernel(nodes, rec, cpy, x0.copy(),
                                       _k.KIND_PLANT_REF, pars, icfg)
    meta.update(kind="reference_plant", t0=t0, t_end=t_end)
    return Trajectory(t=ts, x=zs, meta=meta)


def integrate_linear(
    a,
    z0,
    icfg: IntegratorConfig,
    t_end: float,
    *,
    t0: float = 0.0,
    n_samples: int = 2,
) -> Trajectory:
    """dz/dt = A z test problem (integrator validation against expm)."""
    a = np.asarray(a, dtype=float)
    z0 = np.asarray(z0, dtype=float)
    out_times = np.linspace(t0, t_end, max(2, n_samples))
    nodes, rec, cpy = build_mesh(t0, t_end, out_times)
    pars = _pack_pars(CstrParams(), linear_a=a)
    status, ts, zs, meta = _run_kernel(nodes, rec, cpy, z0.copy(),
                                       _k.KIND_LINEAR, pars, icfg)
    meta.update(kind="linear", t0=t0, t_end=t_end)
    return Trajectory(t=ts, x=zs, meta=meta)


def integrate_reduced(
    u0,
    ref: "ReferenceTrajectory",
    gains: ESGains,
    p: CstrParams,
    icfg: IntegratorConfig,
    t_end: float,
    *,
    t0: float = 0.0,
    ss_tol: float = 1e-12,
    ss_max_iter: int = 50,
) -> ReducedTrajectory:
    """Simulate the averaged input dynamics on the steady-state curve.

    The rate law matches the full controller except that the cost is
    evaluated at l(u_bar) (in-kernel Newton solve per stage) and the
    phase is anchored at the start of the current averaging window.
    t0 must sit on a window boundary, otherwise the first window's
    anchor would be ill-defined.

    Raises SteadyStateError (with the failing u_bar) if the Newton solve
    breaks down mid-run.
    """
    u0 = np.asarray(u0, dtype=float)
    spec = ref.spec
    w = gains.eta * gains.epsilon
    if abs(t0 / w - round(t0 / w)) > 1e-9:
        raise ValueError(f"t0={t0} is not a multiple of the window {w}")
    dt_cap = w / STEPS_PER_DITHER_PERIOD
    out_times = _output_grid(t0, t_end, spec.period, icfg.samples_per_period)
    m0 = int(np.floor(t0 / w + 0.5))
    m1 = int(np.ceil(t_end / w - 1e-9))
    windows = np.arange(m0, m1 + 1) * w
    events = np.concatenate([_reference_events(spec, t0, t_end), windows])
    nodes, rec, cpy = build_mesh(t0, t_end, out_times, events, windows)
    xs0 = ref.state_at(t0)
    z0 = np.concatenate([u0, xs0, xs0])
    pars = _pack_pars(p, gains, spec, ss_tol=ss_tol, ss_max_iter=ss_max_iter)
    status, ts, zs, meta = _run_kernel(nodes, rec, cpy, z0, _k.KIND_REDUCED,
                                       pars, icfg, dt_cap)
    if status == _k.STATUS_STEADY_STATE_FAIL:
        fail = meta["failure_state"]
        raise SteadyStateError(
            f"steady-state solve failed mid-run at t={meta['t_reached']:.6g} "
            f"for u_bar=({fail[0]:.6g}, {fail[1]:.6g})",
            u=np.array(fail[:2]),
        )
    meta.update(kind="reduced", t0=t0, t_end=t_end,
                u0=list(map(float, u0)), dither_window=w)
    return ReducedTrajectory(t=ts, u_bar=zs[:, 0:2], x_star=zs[:, 2:4],
                             x_frozen=zs[:, 4:6], meta=meta)
