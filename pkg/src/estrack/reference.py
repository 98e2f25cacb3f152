"""Reference input programs and the induced periodic reference state.

A reference is a T-periodic input program u*(t) (sinusoidal or bang-bang,
amplitudes default to the lower input bounds) together with the periodic
plant solution x*(t) it induces.  The periodic initial condition x*(0)
comes from a shooting solve: Newton on x0 -> flow_T(x0) - x0 with a
finite-difference monodromy matrix.  The plant is heavily contracting
over one period here, so the shooting map is near-linear and converges
in a couple of iterations from any reasonable guess.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .integrate import IntegratorConfig, integrate_reference_plant
from .plant import CstrParams, require_domain

WAVEFORMS = ("trig", "bang")


class ShootingError(RuntimeError):
    """Periodic-orbit shooting did not converge; carries the last defect."""

    def __init__(self, msg, x0=None, defect=None):
        super().__init__(msg)
        self.x0 = None if x0 is None else np.asarray(x0, dtype=float)
        self.defect = defect


@dataclass(frozen=True)
class ReferenceSpec:
    """Periodic input program: waveform shape, period, channel amplitudes."""

    waveform: str = "trig"
    period: float = 100.0
    a1: float = -1.798
    a2: float = -0.06663

    def __post_init__(self):
        if self.waveform not in WAVEFORMS:
            raise ValueError(f"unknown waveform {self.waveform!r}")
        if not self.period > 0:
            raise ValueError("period must be positive")

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([self.a1, self.a2])

    def validate_against(self, p: CstrParams) -> None:
        """Check the amplitudes fit the plant's input box."""
        lo, hi = p.input_lower, p.input_upper
        for name, a, l, h in (("a1", self.a1, lo[0], hi[0]),
                              ("a2", self.a2, lo[1], hi[1])):
            if not (l <= a <= h):
                raise ValueError(
                    f"amplitude {name}={a} outside input box [{l}, {h}]"
                )


def reference_input(t, spec: ReferenceSpec) -> np.ndarray:
    """u*(t); scalar t gives shape (2,), array t gives shape (n, 2).

    Trig: a_j sin(2 pi t / T).  Bang-bang: a_j sign(sin(2 pi t / T)) with
    sign(0) = 0 (a measure-zero convention with no trajectory effect).
    """
    t = np.asarray(t, dtype=float)
    s = np.sin(2.0 * np.pi * t / spec.period)
    if spec.waveform == "bang":
        s = np.sign(s)
    out = np.stack([spec.a1 * s, spec.a2 * s], axis=-1)
    return out


def _default_flow_config(spec: ReferenceSpec) -> IntegratorConfig:
    # ~2e4 steps per period resolves the smooth forced dynamics far below
    # the shooting tolerance
    return IntegratorConfig(method="rk4", dt=spec.period / 2e4)


def _flow(x0, spec, p, icfg, t_span) -> np.ndarray:
    traj = integrate_reference_plant(x0, spec, p, icfg, t_span)
    if not traj.completed:
        raise ShootingError(
            f"flow from {np.asarray(x0).tolist()} left the domain at "
            f"t={traj.meta['t_reached']:.6g}",
            x0=x0,
        )
    return traj.final_state()


def find_periodic_orbit(
    spec: ReferenceSpec,
    p: CstrParams,
    x_guess=None,
    tol: float = 1e-9,
    max_iter: int = 15,
    fd_step: float = 1e-7,
    icfg: Optional[IntegratorConfig] = None,
) -> np.ndarray:
    """Initial condition x0 of the T-periodic solution under u*(t).

    Newton on F(x0) = flow_T(x0) - x0; the monodromy is estimated by
    central differences (fd_step per component).  Converged means
    ||F(x0)|| <= tol.
    """
    if icfg is None:
        icfg = _default_flow_config(spec)
    x = require_domain(np.zeros(2) if x_guess is None else
                       np.array(x_guess, dtype=float))
    T = spec.period
    defect_vec = _flow(x, spec, p, icfg, T) - x
    defect = float(np.linalg.norm(defect_vec))
    for _ in range(max_iter):
        if defect <= tol:
            return x
        m = np.empty((2, 2))
        for i in range(2):
            e = np.zeros(2)
            e[i] = fd_step
            fp = _flow(x + e, spec, p, icfg, T)
            fm = _flow(x - e, spec, p, icfg, T)
            m[:, i] = (fp - fm) / (2.0 * fd_step)
        try:
            dx = np.linalg.solve(m - np.eye(2), -defect_vec)
        except np.linalg.LinAlgError as exc:
            raise ShootingError(
                "singular shooting Jacobian", x0=x, defect=defect
            ) from exc
        x_new = x + dx
        new_vec = _flow(x_new, spec, p, icfg, T) - x_new
        new_defect = float(np.linalg.norm(new_vec))
        if not np.isfinite(new_defect):
            raise ShootingError("shooting step produced a non-finite defect",
                                x0=x, defect=defect)
        x, defect_vec, defect = x_new, new_vec, new_defect
    if defect <= tol:
        return x
    raise ShootingError(
        f"shooting did not reach tol={tol:g} in {max_iter} iterations "
        f"(defect {defect:.3e})",
        x0=x, defect=defect,
    )


def _build_splines(spec, p, icfg, x0, step):
    """Periodic interpolants of x*(t) over [0, T], split at bang switches."""
    T = spec.period
    n = max(8, int(round(T / step)) + 1)
    ts = np.linspace(0.0, T, n)
    traj = integrate_reference_plant(x0, spec, p, icfg, T, n_samples=n)
    if not traj.completed:
        raise ShootingError("dense sampling of the orbit left the domain", x0=x0)
    xs = traj.x.copy()
    if spec.waveform == "trig":
        xs[-1] = xs[0]  # close the loop exactly (defect is below tol anyway)
        return [(0.0, T, CubicSpline(ts, xs, bc_type="periodic"))]
    # bang-bang: x* has a corner at each switch, spline each half separately
    half = T / 2.0
    mid = int(np.argmin(np.abs(ts - half)))
    return [
        (0.0, half, CubicSpline(ts[: mid + 1], xs[: mid + 1])),
        (half, T, CubicSpline(ts[mid:], xs[mid:])),
    ]


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Reference program plus its periodic state curve.

    state_at either re-integrates from x*(0) over the folded time
    (mode "cointegrate", same accuracy as the main runs) or evaluates a
    precomputed periodic spline (mode "dense", cheap for dense queries).
    """

    spec: ReferenceSpec
    x_star_0: np.ndarray
    plant: CstrParams
    mode: str = "cointegrate"
    flow_config: IntegratorConfig = None
    _splines: Optional[list] = None

    def __post_init__(self):
        self.x_star_0.setflags(write=False)

    def input_at(self, t) -> np.ndarray:
        return reference_input(t, self.spec)

    def state_at(self, t: float) -> np.ndarray:
        """x*(t) for scalar t (folded into [0, T) by periodicity)."""
        tau = float(t) % self.spec.period
        if tau == 0.0:
            return self.x_star_0.copy()
        if self.mode == "dense":
            for lo, hi, s in self._splines:
                if lo <= tau <= hi:
                    return np.asarray(s(tau), dtype=float)
        return _flow(self.x_star_0, self.spec, self.plant,
                     self.flow_config, tau)

    def sample(self, ts) -> np.ndarray:
        """x*(t) for an array of times, one folded co-integration pass."""
        ts = np.asarray(ts, dtype=float)
        tau = np.mod(ts.ravel(), self.spec.period)
        uniq = np.unique(np.concatenate([[0.0], tau]))
        traj = integrate_reference_plant(
            self.x_star_0, self.spec, self.plant, self.flow_config,
            float(uniq[-1]) if uniq[-1] > 0 else self.spec.period,
            out_times=uniq if uniq[-1] > 0 else None,
        )
        if not traj.completed:
            raise ShootingError("orbit sampling left the domain",
                                x0=self.x_star_0)
        # recorded times may have been snapped onto switch events by up to
        # 1e-9, so match by nearest node rather than equality
        idx = np.clip(np.searchsorted(traj.t, tau), 1, traj.t.size - 1)
        left = np.abs(tau - traj.t[idx - 1]) <= np.abs(traj.t[idx] - tau)
        idx = np.where(left, idx - 1, idx)
        return traj.x[idx].reshape(ts.shape + (2,))

    def periodicity_defect(self, n_periods: int = 1) -> float:
        """||flow_{kT}(x*(0)) - x*(0)||, a direct check of the orbit."""
        xT = _flow(self.x_star_0, self.spec, self.plant, self.flow_config,
                   n_periods * self.spec.period)
        return float(np.linalg.norm(xT - self.x_star_0))


def make_reference(
    spec: ReferenceSpec,
    p: CstrParams,
    mode: str = "cointegrate",
    x_guess=None,
    tol: float = 1e-9,
    dense_step: Optional[float] = None,
    icfg: Optional[IntegratorConfig] = None,
) -> ReferenceTrajectory:
    """Shoot for the periodic orbit and wrap it as a ReferenceTrajectory."""
    if mode not in ("cointegrate", "dense"):
        raise ValueError(f"unknown evaluation mode {mode!r}")
    spec.validate_against(p)
    if icfg is None:
        icfg = _default_flow_config(spec)
    x0 = find_periodic_orbit(spec, p, x_guess=x_guess, tol=tol, icfg=icfg)
    splines = None
    if mode == "dense":
        step = dense_step if dense_step is not None else spec.period / 4000.0
        splines = _build_splines(spec, p, icfg, x0, step)
    return ReferenceTrajectory(spec=spec, x_star_0=x0, plant=p, mode=mode,
                               flow_config=icfg, _splines=splines)
