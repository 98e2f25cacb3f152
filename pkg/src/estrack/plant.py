"""Controlled-plant abstraction and the concrete CSTR reaction model.

States are dimensionless deviations from a nominal operating point: x1 is
the reactant concentration deviation, x2 the temperature deviation.  The
admissible domain is D = {x1 > -1, x2 > -1}; outside it the Arrhenius
term is meaningless and all operations raise :class:`DomainError`.

Two variants of the vector field are provided.  The "corrected" form
multiplies the reaction term (x1+1)^n_bar * exp(-kappa/(x2+1)) by k1 in
the first equation and k2 in the second, which makes (x,u)=(0,0) an exact
equilibrium and matches the closed-form Jacobian used throughout.  The
"printed" form leaves the reaction term unscaled; it does not vanish at
the origin and is kept only so the discrepancy between the two can be
demonstrated.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np


class DomainError(ValueError):
    """State left the admissible domain D (x1 > -1 and x2 > -1)."""


class SteadyStateError(RuntimeError):
    """Newton solve for the steady-state map did not converge.

    Carries the last iterate and residual for diagnosis.
    """

    def __init__(self, msg, u=None, last_x=None, residual=None):
        super().__init__(msg)
        self.u = None if u is None else np.asarray(u, dtype=float)
        self.last_x = None if last_x is None else np.asarray(last_x, dtype=float)
        self.residual = residual


MODEL_VARIANTS = ("corrected", "printed")


@dataclass(frozen=True)
class PlantDims:
    n_x: int
    n_u: int

    def __post_init__(self):
        if self.n_x < 1 or self.n_u < 1:
            raise ValueError("state and input dimensions must be >= 1")


CSTR_DIMS = PlantDims(n_x=2, n_u=2)


@dataclass(frozen=True)
class CstrParams:
    """Dimensionless parameters of the nonisothermal reaction model.

    Defaults are the hydrolysis-reaction set used by the bundled
    experiments.  ``variant`` selects the vector-field form (see module
    docstring); "corrected" is the default.
    """

    n_bar: float = 1.0
    phi1: float = 1.0
    phi2: float = 1.0
    k1: float = 5.819e7
    k2: float = -8.99e5
    kappa: float = 17.77
    u1_min: float = -1.798
    u1_max: float = 1.798
    u2_min: float = -0.06663
    u2_max: float = 0.06663
    variant: str = "corrected"

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if not (self.u1_min < self.u1_max):
            raise ValueError("need u1_min < u1_max")
        if not (self.u2_min < self.u2_max):
            raise ValueError("need u2_min < u2_max")
        if self.variant not in MODEL_VARIANTS:
            raise ValueError(f"unknown model variant {self.variant!r}")

    @property
    def input_lower(self) -> np.ndarray:
        return np.array([self.u1_min, self.u2_min])

    @property
    def input_upper(self) -> np.ndarray:
        return np.array([self.u1_max, self.u2_max])

    def with_variant(self, variant: str) -> "CstrParams":
        return replace(self, variant=variant)

    def input_in_box(self, u) -> bool:
        u = np.asarray(u, dtype=float)
        return bool(np.all(u >= self.input_lower) and np.all(u <= self.input_upper))


@dataclass(frozen=True)
class SpectralInfo:
    """Jacobian together with its closed-form 2x2 eigenvalues."""

    jacobian: np.ndarray
    eigenvalues: tuple[complex, complex]
    hurwitz: bool


def in_domain(x) -> bool:
    x = np.asarray(x, dtype=float)
    return bool(x[0] > -1.0 and x[1] > -1.0)


def require_domain(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not in_domain(x):
        raise DomainError(f"state {x.tolist()} outside D (need x1 > -1 and x2 > -1)")
    return x


def cstr_rhs(x, u, p: CstrParams) -> np.ndarray:
    """Instantaneous state derivative f(x, u) of the reaction model.

    Raises :class:`DomainError` if x is outside D; never returns NaN for
    in-domain states.
    """
    x = require_domain(x)
    u = np.asarray(u, dtype=float)
    feed = np.exp(-p.kappa)
    reaction = (x[0] + 1.0) ** p.n_bar * np.exp(-p.kappa / (x[1] + 1.0))
    if p.variant == "corrected":
        r1, r2 = p.k1 * reaction, p.k2 * reaction
    else:
        r1 = r2 = reaction
    return np.array(
        [
            -p.phi1 * x[0] + p.k1 * feed - r1 + u[0],
            -p.phi2 * x[1] + p.k2 * feed - r2 + u[1],
        ]
    )


def cstr_jacobian(x, u, p: CstrParams) -> np.ndarray:
    """Closed-form state Jacobian df/dx of :func:`cstr_rhs`.

    u enters the dynamics additively, so df/du is the identity and is not
    computed here.
    """
    x = require_domain(x)
    arr = np.exp(-p.kappa / (x[1] + 1.0))
    dr_dx1 = p.n_bar * (x[0] + 1.0) ** (p.n_bar - 1.0) * arr
    dr_dx2 = (x[0] + 1.0) ** p.n_bar * arr * p.kappa / (x[1] + 1.0) ** 2
    if p.variant == "corrected":
        c1, c2 = p.k1, p.k2
    else:
        c1 = c2 = 1.0
    return np.array(
        [
            [-p.phi1 - c1 * dr_dx1, -c1 * dr_dx2],
            [-c2 * dr_dx1, -p.phi2 - c2 * dr_dx2],
        ]
    )


def spectral_info(a) -> SpectralInfo:
    """Eigenvalues of a real 2x2 matrix from the trace/determinant formula.

    The Hurwitz flag is true iff both eigenvalue real parts are negative.
    """
    a = np.asarray(a, dtype=float)
    if a.shape != (2, 2):
        raise ValueError("expected a 2x2 matrix")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    tr = a[0, 0] + a[1, 1]
    det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    disc = tr * tr / 4.0 - det
    if disc >= 0.0:
        root = np.sqrt(disc)
        lam1, lam2 = complex(tr / 2.0 - root), complex(tr / 2.0 + root)
    else:
        root = np.sqrt(-disc)
        lam1, lam2 = complex(tr / 2.0, -root), complex(tr / 2.0, root)
    hurwitz = bool(lam1.real < 0.0 and lam2.real < 0.0)
    return SpectralInfo(jacobian=a, eigenvalues=(lam1, lam2), hurwitz=hurwitz)


def _solve_2x2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    if abs(det) < 1e-300:
        raise np.linalg.LinAlgError("singular 2x2 system")
    return np.array(
        [
            (a[1, 1] * b[0] - a[0, 1] * b[1]) / det,
            (a[0, 0] * b[1] - a[1, 0] * b[0]) / det,
        ]
    )


def steady_state_map(
    u,
    p: CstrParams,
    tol: float = 1e-12,
    max_iter: int = 50,
    x0=None,
) -> np.ndarray:
    """Equilibrium state l(u) with ||f(l(u), u)|| <= tol.

    Damped Newton iteration (step halving, up to 30 halvings) started at
    the origin unless ``x0`` is given.  Raises :class:`SteadyStateError`
    on non-convergence and :class:`DomainError` when every damped step
    would leave D.
    """
    u = np.asarray(u, dtype=float)
    x = np.zeros(2) if x0 is None else require_domain(np.array(x0, dtype=float))
    fx = cstr_rhs(x, u, p)
    res = float(np.linalg.norm(fx))
    for _ in range(max_iter):
        if res <= tol:
            return x
        try:
            dx = _solve_2x2(cstr_jacobian(x, u, p), -fx)
        except np.linalg.LinAlgError as exc:
            raise SteadyStateError(
                f"singular Jacobian at iterate {x.tolist()} (u={u.tolist()})",
                u=u, last_x=x, residual=res,
            ) from exc
        lam = 1.0
        blocked_by_domain = True
        for _ in range(30):
            x_try = x + lam * dx
            if in_domain(x_try):
                blocked_by_domain = False
                f_try = cstr_rhs(x_try, u, p)
                r_try = float(np.linalg.norm(f_try))
                if r_try < res:
                    x, fx, res = x_try, f_try, r_try
                    break
            lam *= 0.5
        else:
            if blocked_by_domain:
                raise DomainError(
                    f"Newton iterates for u={u.tolist()} leave D from x={x.tolist()}"
                )
            raise SteadyStateError(
                f"no descent after 30 step halvings (u={u.tolist()})",
                u=u, last_x=x, residual=res,
            )
    if res <= tol:
        return x
    raise SteadyStateError(
        f"steady-state Newton did not reach tol={tol:g} in {max_iter} iterations "
        f"(u={u.tolist()}, residual={res:.3e})",
        u=u, last_x=x, residual=res,
    )


def steady_state_stability(
    u, p: CstrParams, tol: float = 1e-12, max_iter: int = 50
) -> SpectralInfo:
    """Spectral data of the state Jacobian evaluated at (l(u), u)."""
    x = steady_state_map(u, p, tol=tol, max_iter=max_iter)
    return spectral_info(cstr_jacobian(x, u, p))


def steady_state_continuation(
    us: Iterable, p: CstrParams, tol: float = 1e-12, max_iter: int = 50
) -> np.ndarray:
    """Solve l(u) along a sequence of inputs, warm-starting each solve.

    Returns an (N, 2) array.  Intended for slowly varying input paths
    (reference curves, grid sweeps) where neighboring roots are close.
    """
    us = np.atleast_2d(np.asarray(us, dtype=float))
    out = np.empty((us.shape[0], 2))
    x_prev = None
    for i, u in enumerate(us):
        out[i] = steady_state_map(u, p, tol=tol, max_iter=max_iter, x0=x_prev)
        x_prev = out[i]
    return out
