"""Shooting for kappa in (n, n+1): match the sonic analytic solution with the regular origin solution.

The sonic leg is numerically unstable in the forward direction: a perturbation
of size e at Y = r grows like e (Y/r)**kappa.  The mismatch is therefore
measured in the stable direction.  The (Y, U) equation is integrated backward
from the origin-side point (Y_F, U_F) to a small r, where it is compared with
the sonic series.  Solution curves of a scalar ODE do not cross, so

    g(kappa) ~= -Phi'(r -> Y_F) * (U_back(r) - U_series(r)),

where Phi' is the variational factor of the backward flow.  A forward run at
the matched kappa gives the direct value of g as an independent check.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy.integrate import solve_ivp

from . import phase_system as ps
from .parameters import Config, derive_params
from .taylor_series import compute_series

__all__ = [
    "IntegrationFailure",
    "NoBracket",
    "LocalSolution",
    "StopCondition",
    "Event",
    "Trajectory",
    "MismatchResult",
    "ShootConfig",
    "ShootResult",
    "local_solution_sonic",
    "local_solution_origin",
    "origin_coefficients",
    "taylor_coeffs_YU",
    "taylor_coeffs_desing",
    "integrate",
    "params_factory",
    "origin_point",
    "choose_delta_Y",
    "mismatch_g",
    "forward_g",
    "find_kappa",
    "find_kappa_auto",
    "glue_checks",
    "amplification",
]


class IntegrationFailure(RuntimeError):
    pass


class NoBracket(RuntimeError):
    pass


# ------------------------------------------------------------------ local solutions


@dataclass
class LocalSolution:
    center: str  # SonicYU or OriginZV
    coefficients: list
    order: int
    eval_radius: object

    def __call__(self, x):
        return mpmath.polyval(self.coefficients[::-1], x)

    def deriv(self, x):
        c = [i * a for i, a in enumerate(self.coefficients)][1:]
        return mpmath.polyval(c[::-1], x)


def _tail_radius(coeffs, lead, tail_tol, r_max):
    """Largest r <= r_max with |c_K r**K| < tail_tol |lead(r)| for the last two terms."""
    K = len(coeffs) - 1

    def ok(r):
        ref = abs(lead(r))
        return all(abs(coeffs[k]) * r ** k < tail_tol * ref for k in (K - 1, K) if coeffs[k] != 0)

    lo, hi = mpmath.mpf(0), mpmath.mpf(r_max)
    if ok(hi):
        return hi
    for _ in range(80):
        mid = (lo + hi) / 2
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def local_solution_sonic(params, order, tail_tol=1e-14, series=None, r_max=None):
    """Truncated sonic series with a tail-dominance evaluation radius."""
    with mpmath.workdps(params.dps):
        ser = series if series is not None else compute_series(params, order)
        c = [mpmath.mpf(u) for u in ser.U[: order + 1]]
        U0, U1 = c[0], c[1]
        r_max = r_max if r_max is not None else mpmath.mpf(1) / 4
        r = _tail_radius(c, lambda x: U0 + U1 * x, mpmath.mpf(tail_tol), r_max)
        return LocalSolution("SonicYU", c, order, r)


def _tmul(a, b, K):
    out = [mpmath.mpf(0)] * (K + 1)
    for i, x in enumerate(a[: K + 1]):
        if x == 0:
            continue
        for j in range(min(len(b), K + 1 - i)):
            out[i + j] += x * b[j]
    return out


def origin_coefficients(params, order):
    """Coefficients V_0..V_order of the regular solution at Z = 0 (odd powers only).

    Matching powers in Delta_Z V' = Delta_V, the Z**k coefficient is
    (k + d - 1) V_k + (terms in V_1..V_{k-1}), so V_k follows from the residual
    computed with V_k = 0.
    """
    d, g, ell = params.d, params.gamma, params.ell
    K = order
    V = [mpmath.mpf(0)] * (K + 1)
    Zs = [mpmath.mpf(0)] * (K + 1)
    if K >= 1:
        Zs[1] = mpmath.mpf(1)
    for k in range(1, K + 1):
        V[k] = mpmath.mpf(0)
        ZV = _tmul(Zs, V, K)
        one_m_ZV = [-x for x in ZV]
        one_m_ZV[0] += 1
        VmZ = [v - z for v, z in zip(V, Zs)]
        inner = [a - ell * b for a, b in zip(_tmul(one_m_ZV, one_m_ZV, K), _tmul(VmZ, VmZ, K))]
        dZ = _tmul(Zs, inner, K)
        dV_ = [i * v for i, v in enumerate(V)][1:] + [mpmath.mpf(0)]
        VV = _tmul(V, V, K)
        one_m_VV = [-x for x in VV]
        one_m_VV[0] += 1
        t1 = [x / (g + 1) for x in _tmul(one_m_VV, Zs, K)]
        t2 = _tmul(V, one_m_ZV, K)
        DV = [(d - 1) * x for x in _tmul(one_m_VV, [a - b for a, b in zip(t1, t2)], K)]
        res = _tmul(dZ, dV_, K)[k] - DV[k]
        V[k] = -res / (k + d - 1)
    return V


def local_solution_origin(params, order=41, tail_tol=1e-14, r_max=None):
    with mpmath.workdps(params.dps):
        c = origin_coefficients(params, order)
        V1 = c[1]
        r_max = r_max if r_max is not None else params.Z0
        r = _tail_radius(c, lambda x: V1 * x, mpmath.mpf(tail_tol), r_max)
        return LocalSolution("OriginZV", c, order, r)


# ------------------------------------------------------------------ Taylor steps


class _MP:
    """Parameters converted once to mpf at the working precision."""

    def __init__(self, params):
        self.d = params.d
        self.eps = mpmath.mpf(params.eps)
        self.A = mpmath.mpf(params.A)
        self.B = mpmath.mpf(params.B)
        self.gamma = mpmath.mpf(params.gamma)
        self.ell = mpmath.mpf(params.ell)


def taylor_coeffs_YU(Y0, U0, P, K):
    """Coefficients of U(Y0 + t) solving Delta_Y(Y, U) U' = Delta_U(Y, U)."""
    d, eps, A, B = P.d, P.eps, P.A, P.B
    f0 = -eps - A * Y0 + B * Y0 * Y0
    f1 = -A + 2 * B * Y0
    f2 = B
    p = [(Y0 - 1) * f0, (Y0 - 1) * f1 + f0, (Y0 - 1) * f2 + f1, f2]
    H = [f0 + (d - 1) * Y0 * (1 - Y0), f1 + (d - 1) * (1 - 2 * Y0), f2 - (d - 1)]
    a = d * Y0 - 1
    u = [U0]
    DY = []
    for j in range(K):
        dy = a * u[j] + (d * u[j - 1] if j >= 1 else 0) + (p[j] if j < 4 else 0)
        DY.append(dy)
        sq = mpmath.fsum(u[i] * u[j - i] for i in range(j + 1))
        hu = mpmath.fsum(H[i] * u[j - i] for i in range(min(j, 2) + 1))
        du = 2 * (sq + hu)
        acc = du
        if j:
            acc -= mpmath.fsum(DY[i] * (j + 1 - i) * u[j + 1 - i] for i in range(1, j + 1))
        if DY[0] == 0:
            raise IntegrationFailure("Delta_Y = 0 on the YU leg")
        u.append(acc / ((j + 1) * DY[0]))
    return u


def taylor_coeffs_desing(Y0, U0, P, K):
    """Coefficients of (Y, U)(xi0 + t) for dY/dxi = Delta_Y, dU/dxi = Delta_U."""
    d, eps, A, B = P.d, P.eps, P.A, P.B
    # (y-1) f(y) = eps + (A-eps) y - (A+B) y^2 + B y^3 ; h(y) = -eps + (d-1-A) y + (B-d+1) y^2
    g0, g1, g2, g3 = eps, A - eps, -(A + B), B
    h0, h1, h2 = -eps, d - 1 - A, B - d + 1
    y, u = [Y0], [U0]
    yy, yyy = [], []
    for j in range(K):
        yy.append(mpmath.fsum(y[i] * y[j - i] for i in range(j + 1)))
        yyy.append(mpmath.fsum(yy[i] * y[j - i] for i in range(j + 1)))
        yu = mpmath.fsum(y[i] * u[j - i] for i in range(j + 1))
        uu = mpmath.fsum(u[i] * u[j - i] for i in range(j + 1))
        uyy = mpmath.fsum(u[i] * yy[j - i] for i in range(j + 1))
        dY = d * yu - u[j] + g1 * y[j] + g2 * yy[j] + g3 * yyy[j] + (g0 if j == 0 else 0)
        dU = 2 * (uu + h0 * u[j] + h1 * yu + h2 * uyy)
        y.append(dY / (j + 1))
        u.append(dU / (j + 1))
    return y, u


def _poly_eval(c, t):
    acc = mpmath.mpf(0)
    for x in reversed(c):
        acc = acc * t + x
    return acc


def _step_size(coeff_lists, tol, K):
    h = None
    for c in coeff_lists:
        scale = 1 + abs(c[0])
        for k in (K - 1, K):
            if c[k] != 0:
                hk = (tol * scale / abs(c[k])) ** (mpmath.mpf(1) / k)
                h = hk if h is None else min(h, hk)
    return h if h is not None else mpmath.mpf(1)


# ------------------------------------------------------------------ trajectories


@dataclass
class StopCondition:
    kind: str
    margin: object  # callable(t, state) -> real
    direction: int = 0  # +1: only upward crossings, -1: downward, 0: both
    terminal: bool = True


@dataclass
class Event:
    kind: str
    location: object
    state: tuple


@dataclass
class Trajectory:
    system: str
    nodes: list = field(default_factory=list)  # (t, state)
    events: list = field(default_factory=list)
    steps: list = field(default_factory=list)  # (t0, h, coefficient lists) for dense output
    stats: dict = field(default_factory=dict)

    @property
    def end(self):
        return self.nodes[-1]

    def first_event(self, kind=None):
        for e in self.events:
            if kind is None or e.kind == kind:
                return e
        return None

    def dense(self, t):
        """State at t from the stored step polynomials (Taylor legs only)."""
        for t0, h, cs in self.steps:
            lo, hi = (t0, t0 + h) if h > 0 else (t0 + h, t0)
            if lo <= t <= hi:
                return tuple(_poly_eval(c, t - t0) for c in cs)
        raise ValueError("t outside the trajectory")

    def dense_deriv(self, t):
        for t0, h, cs in self.steps:
            lo, hi = (t0, t0 + h) if h > 0 else (t0 + h, t0)
            if lo <= t <= hi:
                return tuple(_poly_eval([i * a for i, a in enumerate(c)][1:], t - t0) for c in cs)
        raise ValueError("t outside the trajectory")

    def to_rows(self):
        return [[mpmath.nstr(t, 17)] + [mpmath.nstr(x, 17) for x in s] for t, s in self.nodes]


def _locate(fn, c_list, t0, a, b, fa, tol):
    """Bisection for a sign change of fn on [a, b] (offsets from t0)."""
    for _ in range(200):
        if abs(b - a) <= tol:
            break
        m = (a + b) / 2
        fm = fn(t0 + m, tuple(_poly_eval(c, m) for c in c_list))
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
    return (a + b) / 2


def _taylor_integrate(system, start, direction, stops, tol, t_end, params, order, max_steps,
                      tol_weight, event_tol, samples, phi_offset=0):
    P = _MP(params)
    variational = tol_weight == "variational"
    if variational and system != "YU":
        raise ValueError("variational weighting needs the YU system")
    acc = mpmath.mpf(0)
    t, state = start
    t = mpmath.mpf(t)
    state = tuple(mpmath.mpf(x) for x in state)
    traj = Trajectory(system)
    traj.nodes.append((t, state))
    prev = [s.margin(t, state) for s in stops]
    direction = 1 if direction >= 0 else -1
    for _ in range(max_steps):
        if t_end is not None and (t_end - t) * direction <= 0:
            break
        if variational:
            # local errors are propagated to the far end by the variational factor
            tl = tol * mpmath.exp(min(0, acc - phi_offset))
        else:
            tl = tol * (tol_weight(t, state) if tol_weight else 1)
        K = order if order else max(12, min(90, int(-mpmath.log(tl) / 2) + 4))
        if system == "YU":
            cs = [taylor_coeffs_YU(t, state[0], P, K)]
        else:
            cs = list(taylor_coeffs_desing(state[0], state[1], P, K))
        h = _step_size(cs, tl, K) * mpmath.mpf("0.5")
        if t_end is not None:
            h = min(h, abs(t_end - t))
        if h <= 0 or h < mpmath.mpf(10) ** (-mpmath.mp.dps // 2):
            traj.events.append(Event("StepFailure", t, state))
            traj.stats["failed"] = True
            return traj
        h = h * direction
        # event scan on interior samples of the step
        hit = None
        grid = [h * k / samples for k in range(1, samples + 1)]
        last_t = mpmath.mpf(0)
        after = None
        for off in grid:
            st = tuple(_poly_eval(c, off) for c in cs)
            cur = [s.margin(t + off, st) for s in stops]
            for i, s in enumerate(stops):
                a, b = prev[i], cur[i]
                crossed = (a > 0) != (b > 0) and a != 0
                if crossed and s.direction and ((b > a) != (s.direction > 0)):
                    crossed = False
                if crossed:
                    loc = _locate(s.margin, cs, t, last_t, off, a, event_tol)
                    if hit is None or abs(loc) < abs(hit[1]):
                        hit = (i, loc)
                        after = cur
            prev = cur
            last_t = off
            if hit is not None:
                break
        if hit is not None:
            i, loc = hit
            st = tuple(_poly_eval(c, loc) for c in cs)
            traj.steps.append((t, loc, cs))
            if variational:
                acc += _step_log_phi(P, t, loc, cs[0])
                traj.stats["log_phi"] = acc
            traj.events.append(Event(stops[i].kind, t + loc, st))
            traj.nodes.append((t + loc, st))
            if stops[i].terminal:
                return traj
            t, state = t + loc, st
            prev = [s.margin(t, state) for s in stops]
            # the triggering margin restarts on its far side so the same root is not found again
            prev[i] = after[i]
            continue
        state = tuple(_poly_eval(c, h) for c in cs)
        traj.steps.append((t, h, cs))
        if variational:
            acc += _step_log_phi(P, t, h, cs[0])
            traj.stats["log_phi"] = acc
        t = t + h
        traj.nodes.append((t, state))
    else:
        traj.events.append(Event("StepFailure", t, state))
        traj.stats["failed"] = True
        return traj
    traj.events.append(Event("ReachedTarget", t, state))
    return traj


def _zv_rhs(params):
    d, g, ell = float(params.d), float(params.gamma), float(params.ell)

    def rhs(Z, y):
        V = y[0]
        one = 1 - V * V
        dV = (d - 1) * one * (one * Z / (g + 1) - V * (1 - V * Z))
        dZ = Z * ((1 - Z * V) ** 2 - ell * (V - Z) ** 2)
        return [dV / dZ]

    return rhs


def _integrate_zv(start, direction, stops, tol, t_end, params, dense_samples=200):
    Z0, state = start
    Z0 = float(Z0)
    V0 = float(state[0])
    rhs = _zv_rhs(params)
    evs = []
    for s in stops:
        def ev(Z, y, s=s):
            return float(s.margin(Z, (y[0],)))
        ev.terminal = s.terminal
        ev.direction = s.direction
        evs.append(ev)
    sol = solve_ivp(rhs, (Z0, float(t_end)), [V0], method="DOP853", rtol=tol, atol=tol * 1e-2,
                    events=evs or None, dense_output=True)
    traj = Trajectory("ZV")
    for Z, V in zip(sol.t, sol.y[0]):
        traj.nodes.append((Z, (V,)))
    traj.stats["dense"] = sol.sol
    traj.stats["nfev"] = sol.nfev
    if sol.status == -1:
        traj.events.append(Event("StepFailure", sol.t[-1], (sol.y[0][-1],)))
        return traj
    if evs:
        for i, (te, ye) in enumerate(zip(sol.t_events, sol.y_events)):
            for Z, y in zip(te, ye):
                traj.events.append(Event(stops[i].kind, Z, (y[0],)))
    if sol.status == 0:
        traj.events.append(Event("ReachedTarget", sol.t[-1], (sol.y[0][-1],)))
    return traj


def integrate(system, start_state, direction, stop_conditions=(), tol=1e-12, t_end=None,
              params=None, order=None, max_steps=20000, tol_weight=None, event_tol=1e-12,
              samples=4, phi_offset=0):
    """Integrate one of the systems YU (in Y), Desing (in xi) or ZV (in Z).

    start_state is (t0, state tuple).  YU and Desing use an adaptive Taylor
    method in mpmath at the current working precision; ZV uses DOP853.
    The run stops at the first terminal stop condition, at t_end, or records a
    StepFailure event.
    """
    if params is None:
        raise ValueError("params required")
    stops = list(stop_conditions)
    if system == "ZV":
        if t_end is None:
            raise ValueError("ZV integration needs t_end")
        return _integrate_zv(start_state, direction, stops, tol, t_end, params)
    if system not in ("YU", "Desing"):
        raise ValueError(system)
    tol = mpmath.mpf(tol)
    return _taylor_integrate(system, start_state, direction, stops, tol, t_end, params, order,
                             max_steps, tol_weight, mpmath.mpf(event_tol), samples, phi_offset)


# ------------------------------------------------------------------ shooting


@dataclass
class ShootConfig:
    n: int = 101
    d: int = 4
    p: int = 7
    dps: int | None = None
    r_frac: float = 0.25
    delta_Y: float | None = None
    delta_grid: tuple = (0.2, 0.1, 0.05, 0.025)
    tol: float = 1e-12
    scan_points: int = 9
    scan_margin: float = 1e-4
    g_tol: float = 1e-8
    kappa_tol: float = 1e-12
    max_iter: int = 80
    extra_digits: int = 30
    forward_check: bool = True
    linear_zone: float = 1e-6
    workers: int = 1

    def cfg(self, kappa, dps):
        return Config(d=self.d, p=self.p, gamma_mode="kappa_target", kappa=kappa, dps=dps)


def params_factory(kappa, sc, dps):
    with mpmath.workdps(dps):
        return derive_params(sc.cfg(mpmath.mpf(kappa), dps))


def origin_point(params, delta_Y, tol=1e-13):
    """(Y_F, U_F, V_F) at Z = delta_Y from the regular origin solution."""
    loc = local_solution_origin(params)
    Z = mpmath.mpf(delta_Y)
    if Z <= loc.eval_radius:
        V = loc(Z)
        how = "series"
    else:
        z0 = loc.eval_radius / 2
        tr = integrate("ZV", (z0, (loc(z0),)), 1, (), tol=tol, t_end=Z, params=params)
        V = mpmath.mpf(tr.end[1][0])
        how = "series+DOP853"
    Y, U = ps.YU_of_ZV(Z, V, params)
    return Y, U, V, how


def _Yc(params):
    cs = params.C_star
    cs = cs.to_mpf() if hasattr(cs, "to_mpf") else mpmath.mpf(cs)
    return 1 / (cs * params.kappa)


def _auto_dps(kappa, Y_F, r, tol, extra):
    amp = float(kappa) * math.log10(float(Y_F) / float(r))
    return int(math.ceil(amp - math.log10(tol))) + extra


@dataclass
class MismatchResult:
    kappa: object
    g: object
    h: object
    log10_Phi: object
    exit_class: str
    Y_F: object
    U_F: object
    r: object
    delta_Y: float
    dps: int
    g_lin: object = None
    route: str = "backward"
    trajectory: Trajectory | None = None
    forward_class: str | None = None
    wall_time: float = 0.0

    def summary(self):
        return {
            "kappa": mpmath.nstr(self.kappa, 30),
            "g": mpmath.nstr(self.g, 12),
            "h": mpmath.nstr(self.h, 12),
            "log10_Phi": float(self.log10_Phi),
            "exit_class": self.exit_class,
            "Y_F": float(self.Y_F),
            "U_F": float(self.U_F),
            "r": float(self.r),
            "delta_Y": self.delta_Y,
            "dps": self.dps,
            "wall_time_s": round(self.wall_time, 3),
            "route": self.route,
            "g_lin": mpmath.nstr(self.g_lin, 8),
        }


def _dY_val(P, Y, U):
    f = -P.eps - P.A * Y + P.B * Y * Y
    return (P.d * Y - 1) * U + (Y - 1) * f


def _dUF_dU(P, Y, U):
    """d/dU (Delta_U / Delta_Y)."""
    d = P.d
    f = -P.eps - P.A * Y + P.B * Y * Y
    h = f + (d - 1) * Y * (1 - Y)
    dY = (d * Y - 1) * U + (Y - 1) * f
    dU = 2 * U * (U + h)
    return (2 * (2 * U + h) * dY - dU * (d * Y - 1)) / (dY * dY)


def _step_log_phi(P, t0, h, c, nodes=12):
    """Signed integral of d/dU (Delta_U/Delta_Y) over one step (Gauss-Legendre)."""
    xs, ws = _gl(nodes)
    total = mpmath.mpf(0)
    for x, w in zip(xs, ws):
        s = h * (x + 1) / 2
        total += w * _dUF_dU(P, t0 + s, _poly_eval(c, s))
    return total * h / 2


def _log_phi(traj, P, nodes=12):
    return mpmath.fsum(_step_log_phi(P, t0, h, cs[0], nodes) for t0, h, cs in traj.steps)


_GL_CACHE = {}


def _gl(n):
    key = (n, mpmath.mp.dps)
    if key not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(n)
        _GL_CACHE[key] = ([mpmath.mpf(float(a)) for a in x], [mpmath.mpf(float(b)) for b in w])
    return _GL_CACHE[key]


def _series_order(kappa, dps, r_frac):
    # terms beyond kappa decay like r_frac**(k - kappa)
    return int(kappa) + int(math.ceil(dps * math.log(10) / -math.log(r_frac))) + 10


def _sonic_setup(kappa, sc, delta_Y, dps):
    params = params_factory(kappa, sc, dps)
    Y_F, U_F, _, _ = origin_point(params, delta_Y)
    r = mpmath.mpf(sc.r_frac) * _Yc(params)
    return params, Y_F, U_F, r


def _backward(params, Y_F, U_F, r, tol, variational):
    P = _MP(params)
    # the backward orbit may leave the barrier region; only Delta_Y = 0 is fatal
    stops = [StopCondition("DeltaY_zero", lambda t, s: _dY_val(P, t, s[0]))]
    tr = integrate("YU", (Y_F, (U_F,)), -1, stops, tol=tol, t_end=r, params=params,
                   tol_weight="variational" if variational else None)
    last = tr.events[-1]
    if last.kind != "ReachedTarget":
        raise IntegrationFailure(f"backward leg ended with {last.kind} at Y = {mpmath.nstr(last.location, 8)}")
    if not variational:
        tr.stats["log_phi"] = _log_phi(tr, P)
    return tr


def amplification(kappa, sc, delta_Y):
    """log10 of the forward variational factor from r to Y_F (low precision pre-pass)."""
    with mpmath.workdps(30):
        params, Y_F, U_F, r = _sonic_setup(mpmath.mpf(kappa), sc, delta_Y, 30)
        tr = _backward(params, Y_F, U_F, r, mpmath.mpf(10) ** -15, False)
        return float(-tr.stats["log_phi"] / mpmath.log(10))


def mismatch_g(kappa, sc, delta_Y, dps=None, keep_trajectory=False, tol=None):
    """Signed mismatch g(kappa) = U_ext(Y_F) - U_F.

    The stable backward leg gives the linearized value g_lin.  When g_lin is
    small it is returned directly; otherwise the sonic orbit is integrated
    forward, which also decides the exit class.
    """
    t0 = time.perf_counter()
    tol = sc.tol if tol is None else tol
    kappa = mpmath.mpf(kappa)
    if dps is None:
        amp = amplification(kappa, sc, delta_Y)
        dps = int(math.ceil(amp - math.log10(tol))) + sc.extra_digits
    with mpmath.workdps(dps):
        params, Y_F, U_F, r = _sonic_setup(kappa, sc, delta_Y, dps)
        order = _series_order(kappa, dps, sc.r_frac)
        loc = local_solution_sonic(params, order, tail_tol=mpmath.mpf(10) ** (-dps + 5), r_max=r)
        U_an = loc(r)
        tr = _backward(params, Y_F, U_F, r, mpmath.mpf(tol) / 100, True)
        h = tr.end[1][0] - U_an
        logphi = -tr.stats["log_phi"]  # forward factor r -> Y_F
        g_lin = -h * mpmath.exp(logphi)
        log10_phi = logphi / mpmath.log(10)
        if abs(g_lin) <= sc.linear_zone * (1 + abs(U_F)):
            g, cls, route, fwd = g_lin, "ReachedTarget", "backward", None
        else:
            # outside the linear regime the sonic orbit itself decides
            g, cls, _, _ = forward_g(kappa, sc, delta_Y, dps, log10_phi, tol=tol)
            route, fwd = "forward", cls
        return MismatchResult(kappa=kappa, g=g, h=h, log10_Phi=log10_phi,
                              exit_class=cls, Y_F=Y_F, U_F=U_F, r=r, delta_Y=delta_Y, dps=dps,
                              g_lin=g_lin, route=route, forward_class=fwd,
                              trajectory=tr if keep_trajectory else None,
                              wall_time=time.perf_counter() - t0)


def _far_barriers(params):
    from .barrier_certifier import build_far_barriers

    return build_far_barriers(params)


def forward_g(kappa, sc, delta_Y, dps, log10_phi, tol=None):
    """Direct evaluation of g: integrate the sonic solution forward from r toward Y_F.

    log10_phi is the forward variational factor, used to distribute the error budget.
    """
    tol = sc.tol if tol is None else tol
    with mpmath.workdps(dps):
        kappa = mpmath.mpf(kappa)
        params, Y_F, U_F, r = _sonic_setup(kappa, sc, delta_Y, dps)
        order = _series_order(kappa, dps, sc.r_frac)
        loc = local_solution_sonic(params, order, tail_tol=mpmath.mpf(10) ** (-dps + 5), r_max=r)
        fb = _far_barriers(params)
        stops = [
            StopCondition("ExitUpper_EB1", lambda t, s: s[0] - fb.upper(t)),
            StopCondition("ExitLower_EB2", lambda t, s: fb.lower(t) - s[0]),
        ]
        tr = integrate("YU", (r, (loc(r),)), 1, stops, tol=mpmath.mpf(tol) / 100, t_end=Y_F,
                       params=params, tol_weight="variational",
                       phi_offset=mpmath.mpf(log10_phi) * mpmath.log(10))
        last = tr.events[-1]
        if last.kind == "ReachedTarget":
            g = tr.end[1][0] - U_F
        elif last.kind == "ExitUpper_EB1":
            g = fb.upper(Y_F) - U_F
        elif last.kind == "ExitLower_EB2":
            g = fb.lower(Y_F) - U_F
        else:
            raise IntegrationFailure(last.kind)
        return g, last.kind, tr, loc


def choose_delta_Y(sc, kappa_lo, kappa_hi):
    """Largest grid value whose origin point sits strictly between the far barriers for both kappa."""
    for dY in sc.delta_grid:
        ok = True
        for k in (kappa_lo, kappa_hi):
            with mpmath.workdps(30):
                p = params_factory(k, sc, 30)
                if mpmath.mpf(dY) >= p.Z0:
                    ok = False
                    break
                Y_F, U_F, _, _ = origin_point(p, dY)
                fb = _far_barriers(p)
                if not (0 < Y_F < p.Y_O and fb.upper(Y_F) < U_F < fb.lower(Y_F)):
                    ok = False
                    break
        if ok:
            return dY
    raise IntegrationFailure("no delta_Y on the grid keeps the origin point inside the barrier region")


@dataclass
class ShootResult:
    n: int
    kappa_star: object
    g_star: object
    delta_Y: float
    dps: int
    bracket_history: list
    g_values: list
    scan: list
    final: MismatchResult
    forward: dict | None = None
    glued: dict | None = None
    wall_time: float = 0.0
    forward_trajectory: Trajectory | None = None
    bracket_classes: list | None = None
    sonic_local: LocalSolution | None = None

    @property
    def kappa_float(self):
        return float(self.kappa_star)

    def to_json(self):
        return {
            "n": self.n,
            "kappa_star": mpmath.nstr(self.kappa_star, 40),
            "kappa_star_hex": float(self.kappa_star).hex(),
            "g_star": mpmath.nstr(self.g_star, 12),
            "delta_Y": self.delta_Y,
            "dps": self.dps,
            "bracket_history": [[mpmath.nstr(a, 25), mpmath.nstr(b, 25)] for a, b in self.bracket_history],
            "g_values": [[mpmath.nstr(k, 25), mpmath.nstr(g, 10)] for k, g in self.g_values],
            "scan": self.scan,
            "bracket_classes": self.bracket_classes,
            "final": self.final.summary(),
            "forward_check": self.forward,
            "glued": self.glued,
            "wall_time_s": round(self.wall_time, 2),
        }

    def dumps(self):
        return json.dumps(self.to_json(), indent=2)


def _sgn(x):
    return (x > 0) - (x < 0)


def _scan_one(args):
    k, sc, delta_Y = args
    with mpmath.workdps(_KAPPA_DPS):
        return mismatch_g(mpmath.mpf(k), sc, delta_Y)


_KAPPA_DPS = 50


def find_kappa(n, sc=None, log=None):
    """Scan (n, n+1) for a sign change of g, then refine by Illinois regula falsi."""
    if n % 2 == 0:
        raise ValueError("n must be odd")
    sc = sc or ShootConfig(n=n)
    if sc.n != n:
        sc = dataclasses.replace(sc, n=n)
    with mpmath.workdps(_KAPPA_DPS):
        return _find_kappa(n, sc, log or (lambda *a: None))


def _find_kappa(n, sc, say):
    t0 = time.perf_counter()
    lo_k = mpmath.mpf(n) + sc.scan_margin
    hi_k = mpmath.mpf(n + 1) - sc.scan_margin
    delta_Y = sc.delta_Y or choose_delta_Y(sc, lo_k, hi_k)
    m = sc.scan_points
    ks = [lo_k + (hi_k - lo_k) * i / (m - 1) for i in range(m)]
    jobs = [(str(k), sc, delta_Y) for k in ks]
    if sc.workers > 1:
        with ProcessPoolExecutor(max_workers=sc.workers) as ex:
            vals = list(ex.map(_scan_one, jobs))
    else:
        vals = [_scan_one(j) for j in jobs]
    scan = [r.summary() for r in vals]
    for r in vals:
        say(f"scan kappa={mpmath.nstr(r.kappa, 10)} class={r.exit_class} g={mpmath.nstr(r.g, 5)}")
    change = [i for i in range(m - 1) if _sgn(vals[i].g) * _sgn(vals[i + 1].g) < 0]
    if not change:
        raise NoBracket(f"no sign change of g on ({n}, {n + 1})")
    i = change[0]
    a, b = vals[i], vals[i + 1]
    # widen to the nearest barrier exits on each side when g keeps its sign there
    exits = ("ExitLower_EB2", "ExitUpper_EB1")
    left = [j for j in range(i + 1) if vals[j].exit_class in exits and all(
        _sgn(vals[k].g) == _sgn(a.g) for k in range(j, i + 1))]
    right = [j for j in range(i + 1, m) if vals[j].exit_class in exits and all(
        _sgn(vals[k].g) == _sgn(b.g) for k in range(i + 1, j + 1))]
    if left and right and vals[left[-1]].exit_class != vals[right[0]].exit_class:
        a, b = vals[left[-1]], vals[right[0]]
    hist = [(a.kappa, b.kappa)]
    gvals = [(r.kappa, r.g) for r in vals]
    # regula falsi on the linearized mismatch, which stays smooth where g is clamped
    fa, fb_ = _smooth(a), _smooth(b)
    ka, kb = a.kappa, b.kappa
    side = 0
    best = a if abs(a.g) < abs(b.g) else b
    width_floor = mpmath.mpf(10) ** (-_KAPPA_DPS + 10)
    for it in range(sc.max_iter):
        kc = (ka * fb_ - kb * fa) / (fb_ - fa)
        if not (min(ka, kb) < kc < max(ka, kb)):
            kc = (ka + kb) / 2
        res = mismatch_g(kc, sc, delta_Y)
        fc = _smooth(res)
        gvals.append((kc, res.g))
        if abs(res.g) < abs(best.g):
            best = res
        say(f"iter {it} kappa={mpmath.nstr(kc, 25)} g={mpmath.nstr(res.g, 5)}")
        if _sgn(fc) == _sgn(fb_):
            kb, fb_ = kc, fc
            if side == -1:
                fa /= 2
            side = -1
        else:
            ka, fa = kc, fc
            if side == 1:
                fb_ /= 2
            side = 1
        hist.append((ka, kb))
        if abs(res.g) < sc.g_tol / 10 or fc == 0 or abs(kb - ka) < width_floor:
            break
    final = mismatch_g(best.kappa, sc, delta_Y, keep_trajectory=True)
    result = ShootResult(n=n, kappa_star=best.kappa, g_star=final.g, delta_Y=delta_Y, dps=final.dps,
                         bracket_history=hist, g_values=gvals, scan=scan, final=final,
                         bracket_classes=[a.exit_class, b.exit_class])
    if sc.forward_check:
        g_fwd, kind, tr, loc = forward_g(best.kappa, sc, delta_Y, final.dps, final.log10_Phi)
        result.forward = {"g": mpmath.nstr(g_fwd, 12), "event": kind,
                          "abs_g": float(abs(g_fwd)), "steps": len(tr.steps),
                          "agreement": float(abs(g_fwd - final.g_lin))}
        result.forward_trajectory = tr
        result.sonic_local = loc
        result.glued = glue_checks(result, sc)
    result.wall_time = time.perf_counter() - t0
    return result


def _chain_slope(Y, U, dU, params):
    """dV/dZ along a (Y, U(Y)) curve through the (Z, V) map."""
    g = params.gamma
    q = U + (1 - Y) ** 2
    sq = mpmath.sqrt(q)
    m = U / (1 + g) + 1 - Y
    Z_Y = -(1 - Y) / (sq * m) + sq / (m * m)
    Z_U = 1 / (2 * sq * m) - sq / (m * m * (1 + g))
    V_Y = -1 / sq + (1 - Y) ** 2 / (q * sq)
    V_U = -(1 - Y) / (2 * q * sq)
    return (V_Y + V_U * dU) / (Z_Y + Z_U * dU), Z_Y + Z_U * dU


def glue_checks(result, sc, samples=40):
    """Checks on the glued curve: origin series on [0, delta_Y], sonic series on [0, r], forward YU leg."""
    tr, loc = result.forward_trajectory, result.sonic_local
    with mpmath.workdps(result.dps):
        params = params_factory(result.kappa_star, sc, result.dps)
        P = _MP(params)
        pts = []  # (Y, U, dU/dY)
        r = result.final.r
        for i in range(samples + 1):
            Y = r * i / samples
            pts.append((Y, loc(Y), loc.deriv(Y)))
        for t0, h, cs in tr.steps:
            for frac in (mpmath.mpf(1) / 3, mpmath.mpf(2) / 3, 1):
                s = h * frac
                pts.append((t0 + s, _poly_eval(cs[0], s),
                            _poly_eval([i * c for i, c in enumerate(cs[0])][1:], s)))
        worst_res = worst_slope = mpmath.mpf(0)
        ok_range = ok_below = monotone = True
        lastZ = None
        ZV = []
        for Y, U, dU in pts:
            Z, V = ps.ZV_of_YU(Y, U, params)
            ZV.append((Z, V))
            ok_range &= bool(-1 < V < 1)
            ok_below &= bool(V < Z)
            if lastZ is not None and not Z < lastZ:
                monotone = False
            lastZ = Z
            if Y > 0:
                dUf, dYf = ps.field_YU(Y, U, params)
                worst_res = max(worst_res, abs(dYf * dU - dUf) / abs(dUf))
                chain, _ = _chain_slope(Y, U, dU, params)
                dV, dZ = ps.field_ZV(Z, V, params)
                worst_slope = max(worst_slope, abs(chain - dV / dZ) / abs(chain))
        # origin leg
        oloc = local_solution_origin(params)
        dY_ = mpmath.mpf(result.delta_Y)
        worst_origin = mpmath.mpf(0)
        for i in range(1, samples + 1):
            Z = dY_ * i / samples
            V = oloc(Z)
            ok_range &= bool(-1 < V < 1)
            ok_below &= bool(V < Z)
            dV, dZ = ps.field_ZV(Z, V, params)
            worst_origin = max(worst_origin, abs(oloc.deriv(Z) * dZ - dV) / abs(dV))
        Z_s, V_s = ps.ZV_of_YU(mpmath.mpf(0), loc(0), params)
        return {
            "nodes": len(pts) + samples,
            "V_in_unit_interval": ok_range,
            "V_below_Z": ok_below,
            "Z_decreasing_in_Y": monotone,
            "max_rel_residual_YU": float(worst_res),
            "max_rel_residual_origin": float(worst_origin),
            "max_rel_slope_mismatch": float(worst_slope),
            "V_at_Z0_error": float(abs(V_s - params.V0)),
            "Z_sonic_error": float(abs(Z_s - params.Z0)),
            "passed": bool(ok_range and ok_below and monotone and worst_res < 1e-6
                           and worst_slope < 1e-6 and worst_origin < 1e-6
                           and abs(V_s - params.V0) < 1e-10),
        }


def _smooth(res):
    return -res.h * mpmath.mpf(10) ** res.log10_Phi


def find_kappa_auto(n=101, sc=None, retries=(0, 2, 4), log=None):
    """find_kappa at n, retrying at n+2 and n+4 when no bracket is found."""
    last = None
    for dn in retries:
        try:
            s = sc or ShootConfig(n=n + dn)
            return find_kappa(n + dn, s, log=log)
        except NoBracket as exc:
            last = exc
    raise last
