"""Compiled inner loops: vector fields, in-loop Newton, RK4 and RKF45 drivers.

The closed loop oscillates at 2*pi/(eta*epsilon) (about 6e3 rad per time
unit at the default gains), so a resolved fixed-step run over two
reference periods takes ~1e7 steps.  Everything on that path lives here
as numba kernels.  fastmath stays off: runs must be bit-reproducible on
a given build, and the tracking baselines are regression-locked.

The plant formulas are duplicated from plant.py on purpose (numba cannot
call back into the object layer); the test suite pins the two routes
against each other.

All kernels share one flat parameter vector (see the P_* index map) and
a `kind` code selecting the assembled system:

  kind 0  closed loop          z = [x1, x2, u1, u2, xs1, xs2]
  kind 1  plant, constant u    z = [x1, x2]
  kind 2  linear test system   z = [x1, x2], dz = A z
  kind 3  reduced (averaged)   z = [ub1, ub2, xs1, xs2, xm1, xm2]
  kind 4  plant under u*(t)    z = [x1, x2]

For kind 3 the xm block holds the reference state frozen at the start of
the current averaging window; the drivers copy xs into xm at nodes the
caller has flagged (window boundaries).

Time stepping is node-to-node over a caller-built mesh whose nodes
contain every output time and every event time (bang-bang switches,
averaging-window boundaries).  `t_ref`, the segment midpoint, is what
the discontinuous reference waveform is evaluated at, so the sign of a
bang-bang input is constant within a segment by construction.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# pars layout (float64[N_PARS])
P_NBAR = 0
P_PHI1 = 1
P_PHI2 = 2
P_K1 = 3
P_K2 = 4
P_KAPPA = 5
P_VARIANT = 6     # 0 corrected, 1 printed
P_GAMMA = 7
P_ETA = 8
P_EPS = 9
P_HFLOOR = 10
P_WAVEFORM = 11   # 0 trig, 1 bang-bang
P_PERIOD = 12
P_A1 = 13
P_A2 = 14
P_CLAMP = 15      # 0 off, 1 clamp plant input to the box
P_U1MIN = 16
P_U1MAX = 17
P_U2MIN = 18
P_U2MAX = 19
P_PIN = 20        # 1: feed u*(t) to the plant directly, controller rate 0
P_CU1 = 21
P_CU2 = 22
P_A00 = 23
P_A01 = 24
P_A10 = 25
P_A11 = 26
P_SSTOL = 27
P_SSMAXIT = 28
N_PARS = 30

KIND_CLOSED_LOOP = 0
KIND_PLANT_CONST = 1
KIND_LINEAR = 2
KIND_REDUCED = 3
KIND_PLANT_REF = 4

STATUS_OK = 0
STATUS_DOMAIN_EXIT = 1
STATUS_NOT_FINITE = 2
STATUS_STEADY_STATE_FAIL = 3
STATUS_STEP_UNDERFLOW = 4
STATUS_STEP_BUDGET = 5

# stats layout (float64[N_STATS])
S_STEPS = 0
S_EVALS = 1
S_T_REACHED = 2
S_REJECTED = 3
S_N_REC = 4
S_FAIL_Z0 = 5     # 5..10: state snapshot at failure
S_MAX_H = 11
N_STATS = 12


@njit(cache=True, inline="always")
def _plant_f(x1, x2, u1, u2, pars):
    feed = math.exp(-pars[P_KAPPA])
    if pars[P_NBAR] == 1.0:
        xp = x1 + 1.0
    else:
        xp = (x1 + 1.0) ** pars[P_NBAR]
    reac = xp * math.exp(-pars[P_KAPPA] / (x2 + 1.0))
    if pars[P_VARIANT] == 0.0:
        r1 = pars[P_K1] * reac
        r2 = pars[P_K2] * reac
    else:
        r1 = reac
        r2 = reac
    f1 = -pars[P_PHI1] * x1 + pars[P_K1] * feed - r1 + u1
    f2 = -pars[P_PHI2] * x2 + pars[P_K2] * feed - r2 + u2
    return f1, f2


@njit(cache=True, inline="always")
def _ref_u(t, t_ref, pars):
    w = 2.0 * math.pi / pars[P_PERIOD]
    if pars[P_WAVEFORM] == 0.0:
        s = math.sin(w * t)
        return pars[P_A1] * s, pars[P_A2] * s
    # discontinuous waveform: decided by the segment representative so the
    # value cannot flip from rounding noise at a switch node
    s = math.sin(w * t_ref)
    if s > 0.0:
        sgn = 1.0
    elif s < 0.0:
        sgn = -1.0
    else:
        sgn = 0.0
    return pars[P_A1] * sgn, pars[P_A2] * sgn


@njit(cache=True)
def _steady_state(u1, u2, pars):
    """Damped Newton for l(u) from the origin; returns (status, x1, x2)."""
    x1 = 0.0
    x2 = 0.0
    tol = pars[P_SSTOL]
    max_iter = int(pars[P_SSMAXIT])
    f1, f2 = _plant_f(x1, x2, u1, u2, pars)
    res = math.hypot(f1, f2)
    for _ in range(max_iter):
        if res <= tol:
            return STATUS_OK, x1, x2
        arr = math.exp(-pars[P_KAPPA] / (x2 + 1.0))
        if pars[P_NBAR] == 1.0:
            xp = x1 + 1.0
            dxp = 1.0
        else:
            xp = (x1 + 1.0) ** pars[P_NBAR]
            dxp = pars[P_NBAR] * (x1 + 1.0) ** (pars[P_NBAR] - 1.0)
        dr_dx1 = dxp * arr
        dr_dx2 = xp * arr * pars[P_KAPPA] / ((x2 + 1.0) * (x2 + 1.0))
        if pars[P_VARIANT] == 0.0:
            c1 = pars[P_K1]
            c2 = pars[P_K2]
        else:
            c1 = 1.0
            c2 = 1.0
        a00 = -pars[P_PHI1] - c1 * dr_dx1
        a01 = -c1 * dr_dx2
        a10 = -c2 * dr_dx1
        a11 = -pars[P_PHI2] - c2 * dr_dx2
        det = a00 * a11 - a01 * a10
        if abs(det) < 1e-300:
            return STATUS_STEADY_STATE_FAIL, x1, x2
        dx1 = (-f1 * a11 + f2 * a01) / det
        dx2 = (-f2 * a00 + f1 * a10) / det
        lam = 1.0
        accepted = False
        for _ in range(30):
            xt1 = x1 + lam * dx1
            xt2 = x2 + lam * dx2
            if xt1 > -1.0 and xt2 > -1.0:
                g1, g2 = _plant_f(xt1, xt2, u1, u2, pars)
                r = math.hypot(g1, g2)
                if r < res:
                    x1 = xt1
                    x2 = xt2
                    f1 = g1
                    f2 = g2
                    res = r
                    accepted = True
                    break
            lam *= 0.5
        if not accepted:
            return STATUS_STEADY_STATE_FAIL, x1, x2
    if res <= tol:
        return STATUS_OK, x1, x2
    return STATUS_STEADY_STATE_FAIL, x1, x2


@njit(cache=True)
def _rhs(t, t_ref, z, dz, kind, pars):
    if kind == KIND_CLOSED_LOOP:
        x1 = z[0]
        x2 = z[1]
        xs1 = z[4]
        xs2 = z[5]
        if not (x1 > -1.0 and x2 > -1.0 and xs1 > -1.0 and xs2 > -1.0):
            return STATUS_DOMAIN_EXIT
        ur1, ur2 = _ref_u(t, t_ref, pars)
        if pars[P_PIN] != 0.0:
            p1 = ur1
            p2 = ur2
        else:
            p1 = z[2]
            p2 = z[3]
            if pars[P_CLAMP] != 0.0:
                p1 = min(max(p1, pars[P_U1MIN]), pars[P_U1MAX])
                p2 = min(max(p2, pars[P_U2MIN]), pars[P_U2MAX])
        d1 = x1 - xs1
        d2 = x2 - xs2
        y = d1 * d1 + d2 * d2
        if pars[P_PIN] != 0.0 or y <= pars[P_HFLOOR]:
            dz[2] = 0.0
            dz[3] = 0.0
        else:
            coef = 2.0 * pars[P_GAMMA] / (pars[P_ETA] * math.sqrt(pars[P_EPS]))
            om = 2.0 * math.pi / (pars[P_ETA] * pars[P_EPS])
            ly = math.log(y)
            dz[2] = coef * math.sqrt(math.pi * y) * math.sin(ly + om * t)
            dz[3] = coef * math.sqrt(2.0 * math.pi * y) * math.sin(ly + 2.0 * om * t)
        f1, f2 = _plant_f(x1, x2, p1, p2, pars)
        g1, g2 = _plant_f(xs1, xs2, ur1, ur2, pars)
        dz[0] = f1
        dz[1] = f2
        dz[4] = g1
        dz[5] = g2
        return STATUS_OK
    elif kind == KIND_PLANT_CONST:
        x1 = z[0]
        x2 = z[1]
        if not (x1 > -1.0 and x2 > -1.0):
            return STATUS_DOMAIN_EXIT
        f1, f2 = _plant_f(x1, x2, pars[P_CU1], pars[P_CU2], pars)
        dz[0] = f1
        dz[1] = f2
        return STATUS_OK
    elif kind == KIND_LINEAR:
        dz[0] = pars[P_A00] * z[0] + pars[P_A01] * z[1]
        dz[1] = pars[P_A10] * z[0] + pars[P_A11] * z[1]
        return STATUS_OK
    elif kind == KIND_REDUCED:
        xs1 = z[2]
        xs2 = z[3]
        if not (xs1 > -1.0 and xs2 > -1.0):
            return STATUS_DOMAIN_EXIT
        st, l1, l2 = _steady_state(z[0], z[1], pars)
        if st != STATUS_OK:
            return STATUS_STEADY_STATE_FAIL
        d1 = l1 - xs1
        d2 = l2 - xs2
        y_now = d1 * d1 + d2 * d2
        e1 = l1 - z[4]
        e2 = l2 - z[5]
        y_phase = e1 * e1 + e2 * e2
        if y_now <= pars[P_HFLOOR] or y_phase <= pars[P_HFLOOR]:
            dz[0] = 0.0
            dz[1] = 0.0
        else:
            coef = 2.0 * pars[P_GAMMA] / (pars[P_ETA] * math.sqrt(pars[P_EPS]))
            om = 2.0 * math.pi / (pars[P_ETA] * pars[P_EPS])
            lp = math.log(y_phase)
            dz[0] = coef * math.sqrt(math.pi * y_now) * math.sin(lp + om * t)
            dz[1] = coef * math.sqrt(2.0 * math.pi * y_now) * math.sin(lp + 2.0 * om * t)
        ur1, ur2 = _ref_u(t, t_ref, pars)
        g1, g2 = _plant_f(xs1, xs2, ur1, ur2, pars)
        dz[2] = g1
        dz[3] = g2
        dz[4] = 0.0
        dz[5] = 0.0
        return STATUS_OK
    elif kind == KIND_PLANT_REF:
        x1 = z[0]
        x2 = z[1]
        if not (x1 > -1.0 and x2 > -1.0):
            return STATUS_DOMAIN_EXIT
        ur1, ur2 = _ref_u(t, t_ref, pars)
        f1, f2 = _plant_f(x1, x2, ur1, ur2, pars)
        dz[0] = f1
        dz[1] = f2
        return STATUS_OK
    return STATUS_NOT_FINITE


@njit(cache=True, inline="always")
def _snapshot_failure(stats, n_steps, n_evals, n_rec, t, z):
    stats[S_STEPS] = n_steps
    stats[S_EVALS] = n_evals
    stats[S_T_REACHED] = t
    stats[S_N_REC] = n_rec
    for q in range(z.shape[0]):
        stats[S_FAIL_Z0 + q] = z[q]


@njit(cache=True)
def rk4_run(nodes, rec_flags, copy_flags, dt_target, z, kind, pars,
            ts_out, zs_out, stats):
    """Fixed-step RK4 over the node mesh; z is advanced in place.

    Each segment [nodes[i], nodes[i+1]] is divided into the fewest equal
    substeps of size <= dt_target.  State is recorded at nodes with
    rec_flags set; for kind 3, xs is copied into xm at nodes with
    copy_flags set.  Returns a STATUS_* code.
    """
    dim = z.shape[0]
    k1 = np.empty(dim)
    k2 = np.empty(dim)
    k3 = np.empty(dim)
    k4 = np.empty(dim)
    zt = np.empty(dim)
    n_rec = 0
    n_steps = 0.0
    n_evals = 0.0
    stats[S_MAX_H] = 0.0
    stats[S_REJECTED] = 0.0
    n_nodes = nodes.shape[0]
    for i in range(n_nodes):
        a = nodes[i]
        if copy_flags[i] != 0 and dim >= 6:
            z[4] = z[2]
            z[5] = z[3]
        if rec_flags[i] != 0:
            ts_out[n_rec] = a
            for q in range(dim):
                zs_out[n_rec, q] = z[q]
            n_rec += 1
        if i == n_nodes - 1:
            break
        b = nodes[i + 1]
        seg = b - a
        n_sub = int(math.ceil(seg / dt_target - 1e-12))
        if n_sub < 1:
            n_sub = 1
        h = seg / n_sub
        if h > stats[S_MAX_H]:
            stats[S_MAX_H] = h
        t_ref = 0.5 * (a + b)
        for m in range(n_sub):
            t = a + m * h
            st = _rhs(t, t_ref, z, k1, kind, pars)
            if st == STATUS_OK:
                for q in range(dim):
                    zt[q] = z[q] + 0.5 * h * k1[q]
                st = _rhs(t + 0.5 * h, t_ref, zt, k2, kind, pars)
            if st == STATUS_OK:
                for q in range(dim):
                    zt[q] = z[q] + 0.5 * h * k2[q]
                st = _rhs(t + 0.5 * h, t_ref, zt, k3, kind, pars)
            if st == STATUS_OK:
                for q in range(dim):
                    zt[q] = z[q] + h * k3[q]
                st = _rhs(t + h, t_ref, zt, k4, kind, pars)
            if st != STATUS_OK:
                _snapshot_failure(stats, n_steps, n_evals, n_rec, t, z)
                return st
            for q in range(dim):
                z[q] += (h / 6.0) * (k1[q] + 2.0 * (k2[q] + k3[q]) + k4[q])
            n_steps += 1.0
            n_evals += 4.0
            for q in range(dim):
                if not math.isfinite(z[q]):
                    _snapshot_failure(stats, n_steps, n_evals, n_rec, t + h, z)
                    return STATUS_NOT_FINITE
    stats[S_STEPS] = n_steps
    stats[S_EVALS] = n_evals
    stats[S_T_REACHED] = nodes[n_nodes - 1]
    stats[S_N_REC] = n_rec
    return STATUS_OK


@njit(cache=True)
def rkf45_run(nodes, rec_flags, copy_flags, z, kind, pars,
              atol, rtol, dt_min, dt_max, h_init, max_steps,
              ts_out, zs_out, stats):
    """Adaptive Fehlberg 4(5) over the node mesh; z advanced in place.

    The 5th-order solution is propagated; the 4th/5th difference drives
    the step controller (safety 0.9, growth clipped to [0.2, 5]).  Steps
    never cross a node, so events and output times are hit exactly.
    Returns a STATUS_* code; STATUS_STEP_UNDERFLOW means the controller
    demanded h < dt_min (stiffness for this tolerance).
    """
    dim = z.shape[0]
    k1 = np.empty(dim)
    k2 = np.empty(dim)
    k3 = np.empty(dim)
    k4 = np.empty(dim)
    k5 = np.empty(dim)
    k6 = np.empty(dim)
    zt = np.empty(dim)
    z4 = np.empty(dim)
    z5 = np.empty(dim)
    n_rec = 0
    n_steps = 0.0
    n_evals = 0.0
    n_rej = 0.0
    stats[S_MAX_H] = 0.0
    h = h_init
    if h > dt_max:
        h = dt_max
    n_nodes = nodes.shape[0]
    for i in range(n_nodes):
        a = nodes[i]
        if copy_flags[i] != 0 and dim >= 6:
            z[4] = z[2]
            z[5] = z[3]
        if rec_flags[i] != 0:
            ts_out[n_rec] = a
            for q in range(dim):
                zs_out[n_rec, q] = z[q]
            n_rec += 1
        if i == n_nodes - 1:
            break
        b = nodes[i + 1]
        t = a
        t_ref = 0.5 * (a + b)
        while b - t > 1e-13 * (abs(b) + 1.0):
            if n_steps + n_rej > max_steps:
                _snapshot_failure(stats, n_steps, n_evals, n_rec, t, z)
                stats[S_REJECTED] = n_rej
                return STATUS_STEP_BUDGET
            h_try = h
            if h_try > dt_max:
                h_try = dt_max
            if h_try > b - t:
                h_try = b - t
            st = _rhs(t, t_ref, z, k1, kind, pars)
            if st == STATUS_OK:
                for q in range(dim):
                    zt[q] = z[q] + h_try * 0.25 * k1[q]
                st = _rhs(t + 0.25 * h_try, t_ref, zt, k2, kind, pars)
            if st == STATUS_OK:
                for q in range(dim):
                    zt[q] = z[q] + h_try * (3.0 / 32.0 * k1[q] + 9.0 / 32.0 * k2[q])
                st = _rhs(t + 3.0 / 8.0 * h_try, t_ref, zt, k3, kind, pars)
            if st == STATUS_OK:
                for q in range(dim):
                    zt[q] = z[q] + h_try * (1932.0 / 2197.0 * k1[q]
                                            - 7200.0 / 2197.0 * k2[q]
                                            + 7296.0 / 2197.0 * k3[q])
                st = _rhs(t + 12.0 / 13.0 * h_try, t_ref, zt, k4, kind, pars)
            if st == STATUS_OK:
                for q in range(dim):
                    zt[q] = z[q] + h_try * (439.0 / 216.0 * k1[q] - 8.0 * k2[q]
                                            + 3680.0 / 513.0 * k3[q]
                                            - 845.0 / 4104.0 * k4[q])
                st = _rhs(t + h_try, t_ref, zt, k5, kind, pars)
            if st == STATUS_OK:
                for q in range(dim):
                    zt[q] = z[q] + h_try * (-8.0 / 27.0 * k1[q] + 2.0 * k2[q]
                                            - 3544.0 / 2565.0 * k3[q]
                                            + 1859.0 / 4104.0 * k4[q]
                                            - 11.0 / 40.0 * k5[q])
                st = _rhs(t + 0.5 * h_try, t_ref, zt, k6, kind, pars)
            if st != STATUS_OK:
                _snapshot_failure(stats, n_steps, n_evals, n_rec, t, z)
                stats[S_REJECTED] = n_rej
                return st
            n_evals += 6.0
            err = 0.0
            for q in range(dim):
                z4[q] = z[q] + h_try * (25.0 / 216.0 * k1[q]
                                        + 1408.0 / 2565.0 * k3[q]
                                        + 2197.0 / 4104.0 * k4[q]
                                        - 0.2 * k5[q])
                z5[q] = z[q] + h_try * (16.0 / 135.0 * k1[q]
                                        + 6656.0 / 12825.0 * k3[q]
                                        + 28561.0 / 56430.0 * k4[q]
                                        - 9.0 / 50.0 * k5[q]
                                        + 2.0 / 55.0 * k6[q])
                scale = atol + rtol * max(abs(z[q]), abs(z5[q]))
                e = (z5[q] - z4[q]) / scale
                err += e * e
            err = math.sqrt(err / dim)
            if err <= 1.0:
                t = t + h_try
                for q in range(dim):
                    z[q] = z5[q]
                    if not math.isfinite(z[q]):
                        _snapshot_failure(stats, n_steps, n_evals, n_rec, t, z)
                        stats[S_REJECTED] = n_rej
                        return STATUS_NOT_FINITE
                n_steps += 1.0
                if h_try > stats[S_MAX_H]:
                    stats[S_MAX_H] = h_try
            else:
                n_rej += 1.0
            if err > 0.0:
                fac = 0.9 * err ** -0.2
            else:
                fac = 5.0
            if fac < 0.2:
                fac = 0.2
            elif fac > 5.0:
                fac = 5.0
            h = h_try * fac
            if h < dt_min:
                if err > 1.0:
                    _snapshot_failure(stats, n_steps, n_evals, n_rec, t, z)
                    stats[S_REJECTED] = n_rej
                    return STATUS_STEP_UNDERFLOW
                h = dt_min
    stats[S_STEPS] = n_steps
    stats[S_EVALS] = n_evals
    stats[S_T_REACHED] = nodes[n_nodes - 1]
    stats[S_REJECTED] = n_rej
    stats[S_N_REC] = n_rec
    return STATUS_OK
