"""Dynamic extremum-seeking control law and its averaged reduced form.

The controller never sees the plant state.  Its only input is the scalar
cost value y = h(t, x), so the same law applies to any plant exposing a
cost measurement.  Each input channel j carries its own dither frequency
2*pi*j/(eta*epsilon); the base averaging window has length eta*epsilon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class ESGains:
    """Gains of the extremum-seeking law.

    gamma scales the update rate, epsilon sets the dither time scale,
    eta slows the dither relative to the update (larger eta brings the
    closed loop closer to its averaged behavior), n_u is the number of
    controlled channels.  h_floor guards the logarithm: costs at or
    below it are treated as an exact minimum and produce zero rate.
    """

    gamma: float
    epsilon: float
    eta: float = 1.0
    n_u: int = 2
    h_floor: float = 1e-12

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if int(self.n_u) != self.n_u or self.n_u < 1:
            raise ValueError("n_u must be an integer >= 1")
        if self.h_floor < 0:
            raise ValueError("h_floor must be nonnegative")

    @property
    def rate_coefficient(self) -> float:
        """Common prefactor 2*gamma/(eta*sqrt(epsilon))."""
        return 2.0 * self.gamma / (self.eta * math.sqrt(self.epsilon))

    @property
    def base_frequency(self) -> float:
        """Angular frequency 2*pi/(eta*epsilon) of the slowest dither."""
        return 2.0 * math.pi / (self.eta * self.epsilon)


@dataclass(frozen=True)
class CostSample:
    """A timestamped scalar cost measurement."""

    t: float
    y: float

    def __post_init__(self):
        if self.y < 0:
            raise ValueError("cost must be nonnegative (it is a squared norm)")


def dither_period(gains: ESGains) -> float:
    """Length eta*epsilon of one averaging window (period of the slowest dither)."""
    return gains.eta * gains.epsilon


def es_rhs(t: float, y: float, gains: ESGains) -> np.ndarray:
    """Controller state derivative du_j/dt for j = 1..n_u.

    u_dot_j = (2*gamma/(eta*sqrt(eps))) * sqrt(pi*j*y) * sin(ln y + 2*pi*j*t/(eta*eps)).

    sqrt(y)*sin(ln y) -> 0 as y -> 0+, so the law extends continuously to
    y = 0; any y <= h_floor returns the zero vector under that extension.
    Negative y is a contract violation, not a clamp.
    """
    if y < 0:
        raise ValueError(f"cost must be nonnegative, got {y}")
    n = gains.n_u
    if y <= gains.h_floor:
        return np.zeros(n)
    coef = gains.rate_coefficient
    log_y = math.log(y)
    omega = gains.base_frequency
    out = np.empty(n)
    for j in range(1, n + 1):
        out[j - 1] = coef * math.sqrt(math.pi * j * y) * math.sin(log_y + omega * j * t)
    return out


def es_rate_bound(y: float, gains: ESGains) -> float:
    """Upper bound on ||es_rhs(t, y, gains)|| valid for every t.

    Each channel is bounded by coef*sqrt(pi*j*y); summing j=1..n_u in
    quadrature gives coef*sqrt(pi*y*n_u*(n_u+1)/2).
    """
    if y < 0:
        raise ValueError(f"cost must be nonnegative, got {y}")
    n = gains.n_u
    return gains.rate_coefficient * math.sqrt(math.pi * y * n * (n + 1) / 2.0)


def reduced_rhs(
    t: float,
    u_bar: np.ndarray,
    t_m: float,
    cost_on_steady_state: Callable[[float, np.ndarray], float],
    gains: ESGains,
) -> np.ndarray:
    """Rate of the auxiliary averaged system.

    Same oscillatory law as :func:`es_rhs`, but the cost is evaluated on
    the steady-state curve (``cost_on_steady_state(t, u_bar)`` must
    return h(t, l(u_bar))) and the phase argument of the logarithm is
    frozen at the window start t_m.  Solver errors from the evaluator
    propagate unchanged.
    """
    u_bar = np.asarray(u_bar, dtype=float)
    n = gains.n_u
    y_now = float(cost_on_steady_state(t, u_bar))
    y_phase = float(cost_on_steady_state(t_m, u_bar))
    if y_now < 0 or y_phase < 0:
        raise ValueError("cost evaluator returned a negative value")
    # Either cost at the floor makes the law degenerate (zero amplitude or
    # undefined phase); both cases take the continuous-extension value 0.
    if y_now <= gains.h_floor or y_phase <= gains.h_floor:
        return np.zeros(n)
    coef = gains.rate_coefficient
    log_phase = math.log(y_phase)
    omega = gains.base_frequency
    out = np.empty(n)
    for j in range(1, n + 1):
        out[j - 1] = coef * math.sqrt(math.pi * j * y_now) * math.sin(
            log_phase + omega * j * t
        )
    return out


def window_start(t: float, gains: ESGains) -> float:
    """Start m*eta*eps of the averaging window containing t."""
    w = dither_period(gains)
    return math.floor(t / w) * w
