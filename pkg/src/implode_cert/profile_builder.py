"""Global profile: continue the matched curve through Y = 0 and out to large Z, then build W and Phi.

The legs, in order of increasing Z:

    origin     V(Z) from the origin series on [0, delta_Y]
    sonic_YU   forward (Y, U) leg from Y_F down to r
    series     sonic series on [Y_I'/2, r] (plus a (Y, U) leg if Y_I'/2 < -r)
    desing     desingularized leg in xi, through Delta_Y = 0 and Y = 0
    far        (Z, V) leg out to Z_max

Below the sonic point the (Y, U) curve is unstable, so the first part runs in
mpmath at a precision set by a low precision pass.  W and Phi are integrated
along each leg in floats.
"""

from __future__ import annotations

import bisect
import csv
import io
import json
import math
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy.integrate import quad, solve_ivp

from . import phase_system as ps
from . import shooting_solver as ss

__all__ = [
    "RegionViolation",
    "NotInFarRegion",
    "OverlapMismatch",
    "SingularIntegrand",
    "DesingSegment",
    "BelowSonic",
    "Leg",
    "GlobalProfile",
    "extend_below_sonic",
    "estimate_Y_I",
    "assemble_global_V",
    "compute_W_Phi",
    "J_W",
    "build_profile",
    "check_between_curves",
]


class RegionViolation(RuntimeError):
    pass


class NotInFarRegion(RuntimeError):
    pass


class OverlapMismatch(RuntimeError):
    pass


class SingularIntegrand(RuntimeError):
    pass


# ------------------------------------------------------------------ below the sonic point


@dataclass
class DesingSegment:
    trajectory: ss.Trajectory
    xi1: object
    xi2: object
    xi3: object
    start: tuple
    checks: dict = field(default_factory=dict)

    def markers(self):
        return {"xi1": float(self.xi1), "xi2": float(self.xi2), "xi3": float(self.xi3)}


@dataclass
class BelowSonic:
    yu: ss.Trajectory
    switch: tuple
    Y_I: object
    Y_I_from_desing: object
    log10_amp: float
    dps: int
    desing: DesingSegment
    params: object
    sonic: ss.LocalSolution
    r: object

    def U_ref(self, Y):
        """U on the negative side: series for |Y| <= r, otherwise the (Y, U) leg."""
        if abs(Y) <= self.r:
            return self.sonic(Y)
        return self.yu.dense(Y)[0]


def estimate_Y_I(points):
    """Turning point from (Y, Delta_Y) samples near a square-root zero.

    Y - Y_I' ~ c Delta_Y**2, so Y is quadratic in Delta_Y; the fit is
    evaluated at Delta_Y = 0 (inverse quadratic interpolation).
    """
    (y0, d0), (y1, d1), (y2, d2) = points[-3:]
    return (y0 * d1 * d2 / ((d0 - d1) * (d0 - d2))
            + y1 * d0 * d2 / ((d1 - d0) * (d1 - d2))
            + y2 * d0 * d1 / ((d2 - d0) * (d2 - d1)))


def _root_margin(Y, U, params):
    return min(ps.U_dY(Y, params), ps.U_dU(Y, params), ps.U_g(Y, params)) - U


def extend_below_sonic(shoot, sc=None, switch_ratio=1e-3, y3_cap=0.05, extra_digits=30):
    """Continue the matched solution to Y < 0, through the turning point Y_I' and back across Y = 0."""
    sc = sc or ss.ShootConfig(n=shoot.n)
    loc = shoot.sonic_local
    if loc is None:
        raise ValueError("shoot result has no sonic series; run find_kappa with forward_check")
    r = shoot.final.r
    kappa = shoot.kappa_star

    def switch_margin(params):
        def m(t, s):
            dU, dY = ps.field_YU(t, s[0], params)
            return abs(dY) - switch_ratio * abs(dU)
        return m

    def run_yu(dps, tol):
        with mpmath.workdps(dps):
            params = ss.params_factory(kappa, sc, max(dps, shoot.dps))
            stops = [ss.StopCondition("DeltaYVanishing", switch_margin(params))]
            tr = ss.integrate("YU", (-r, (loc(-r),)), -1, stops, tol=tol, t_end=-ps_gamma(params),
                              params=params)
            return tr, params

    # the amplification measured at too low a precision is itself unreliable, so
    # raise the precision until it covers the amplification of the working run
    amp = 0.0
    for _ in range(6):
        dps = int(math.ceil(max(amp, 0))) + extra_digits
        tr, params = run_yu(dps, mpmath.mpf(10) ** -(dps - 8))
        with mpmath.workdps(dps):
            measured = float(ss._log_phi(tr, ss._MP(params)) / mpmath.log(10))
        if measured <= amp + 2:
            break
        amp = measured
    else:
        raise RegionViolation("precision for the negative (Y, U) leg did not settle")
    with mpmath.workdps(dps):
        last = tr.events[-1]
        if last.kind != "DeltaYVanishing":
            raise RegionViolation(f"negative (Y, U) leg ended with {last.kind}")
        Ysw = last.location
        # three samples approaching the switch point
        pts = []
        for frac in (mpmath.mpf(3), mpmath.mpf(2), mpmath.mpf(1)):
            Y = Ysw + (tr.nodes[-2][0] - Ysw) * frac / 3
            U = tr.dense(Y)[0]
            pts.append((Y, ps.field_YU(Y, U, params)[1]))
        Y_I = estimate_Y_I(pts)
        below = BelowSonic(yu=tr, switch=(Ysw, last.state[0]), Y_I=Y_I, Y_I_from_desing=None,
                           log10_amp=amp, dps=dps, desing=None, params=params, sonic=loc, r=r)
        below.desing = _desing_leg(below, y3_cap, dps)
        below.Y_I_from_desing = below.desing.trajectory.first_event("DeltaYVanishing").state[0]
        return below


def check_between_curves(below, n, samples=200):
    """U_dY(Y) < U(Y) <= G_n(Y) on (Y_I', 0), G_n the order-n truncation of the sonic series.

    G_n - U is the series tail, of size |Y|**(n+1); near Y = 0 it is below the
    working precision, so the upper side allows a relative roundoff slack.
    """
    params = below.params
    with mpmath.workdps(below.dps):
        G = below.sonic.coefficients[: n + 1][::-1]
        slack = mpmath.mpf(10) ** -(below.dps - 10)
        lo = hi = None
        for k in range(1, samples):
            Y = below.Y_I * k / samples
            U = below.U_ref(Y)
            a = (U - ps.U_dY(Y, params)) / abs(U)
            b = (mpmath.polyval(G, Y) - U) / abs(U)
            lo = a if lo is None else min(lo, a)
            hi = b if hi is None else min(hi, b)
        return {"min_rel_above_U_dY": float(lo), "min_rel_below_G_n": float(hi),
                "passed": bool(lo > 0 and hi > -slack)}


def ps_gamma(params):
    return params.gamma


def _desing_leg(below, y3_cap, dps):
    params = below.params
    Y0 = below.Y_I / 2
    U0 = below.U_ref(Y0)
    dY0 = ps.field_YU(Y0, U0, params)[1]
    direction = -1 if dY0 > 0 else 1  # start toward Y_I'
    y3 = mpmath.mpf(y3_cap)
    stops = [
        ss.StopCondition("DeltaYVanishing", lambda t, s: ps.field_YU(s[0], s[1], params)[1], terminal=False),
        ss.StopCondition("CrossedYZero", lambda t, s: s[0], direction=direction, terminal=False),
        ss.StopCondition("Xi3", lambda t, s: s[0] - y3, direction=direction),
    ]
    tr = ss.integrate("Desing", (0, (Y0, U0)), direction, stops, tol=mpmath.mpf(10) ** -(dps - 8),
                      t_end=direction * mpmath.mpf(10) ** 6, params=params, max_steps=20000)
    kinds = [e.kind for e in tr.events]
    for need in ("DeltaYVanishing", "CrossedYZero", "Xi3"):
        if need not in kinds:
            raise RegionViolation(f"desingularized leg missed {need}; events {kinds}")
    xi1 = tr.first_event("DeltaYVanishing").location
    xi2 = tr.first_event("CrossedYZero").location
    xi3 = tr.first_event("Xi3").location
    seg = DesingSegment(trajectory=tr, xi1=xi1, xi2=xi2, xi3=xi3, start=(Y0, U0))
    # xi3 is pulled back if the root-curve margin halves after xi2
    m2 = _root_margin(mpmath.mpf(0), tr.first_event("CrossedYZero").state[1], params)
    for t, (Y, U) in tr.nodes:
        if (t - xi2) * direction > 0 and _root_margin(Y, U, params) < m2 / 2:
            seg.xi3 = t
            break
    seg.checks = check_crossing_region(seg, params, direction)
    if not seg.checks["passed"]:
        raise RegionViolation(json.dumps(seg.checks))
    return seg


def check_crossing_region(seg, params, direction, per_step=4):
    """Clauses on the desingularized leg: Delta_Y(xi1) = 0, Y(xi2) = 0, and on (xi2, xi3]
    0 < Y < 1 with 0 < U below all three root curves.  U > 0 is checked on the whole leg."""
    tr = seg.trajectory
    e1 = tr.first_event("DeltaYVanishing")
    e2 = tr.first_event("CrossedYZero")
    dY_at_xi1 = ps.field_YU(e1.state[0], e1.state[1], params)[1]
    worst = {"Y_gt_0": None, "Y_lt_1": None, "U_gt_0": None, "below_U_dY": None,
             "below_U_dU": None, "below_U_g": None}
    nodes = 0
    U_min = None
    for t0, h, cs in tr.steps:
        for k in range(1, per_step + 1):
            s = h * k / per_step
            t = t0 + s
            Y = ss._poly_eval(cs[0], s)
            U = ss._poly_eval(cs[1], s)
            U_min = U if U_min is None else min(U_min, U)
            if not ((t - seg.xi2) * direction > 0 and (seg.xi3 - t) * direction >= 0):
                continue
            nodes += 1
            margins = {"Y_gt_0": Y, "Y_lt_1": 1 - Y, "U_gt_0": U,
                       "below_U_dY": ps.U_dY(Y, params) - U,
                       "below_U_dU": ps.U_dU(Y, params) - U,
                       "below_U_g": ps.U_g(Y, params) - U}
            for key, v in margins.items():
                if worst[key] is None or v < worst[key]:
                    worst[key] = v
    passed = nodes > 0 and all(v is not None and v > 0 for v in worst.values()) and U_min > 0
    return {
        "passed": bool(passed),
        "nodes_checked": nodes,
        "min_margins": {k: (float(v) if v is not None else None) for k, v in worst.items()},
        "min_U_whole_leg": float(U_min),
        "DeltaY_at_xi1": float(dY_at_xi1),
        "Y_at_xi2": float(e2.state[0]),
        "Y_at_xi3": float(seg.trajectory.dense(seg.xi3)[0]),
    }


# ------------------------------------------------------------------ legs in floats


class Leg:
    """A piece of the global curve with a float evaluator.

    kind: 'Z' (state V), 'Y' (state U as a function of Y) or 'xi' (state (Y, U)).
    s0 -> s1 is the traversal direction (increasing Z).
    """

    def __init__(self, name, kind, s0, s1, evaluator, params_f):
        self.name, self.kind = name, kind
        self.s0, self.s1 = float(s0), float(s1)
        self._ev = evaluator  # s -> (state tuple, derivative tuple)
        self.p = params_f

    def zv(self, s):
        """(Z, V, dV/dZ, dZ/ds) at parameter s."""
        st, dst = self._ev(s)
        p = self.p
        if self.kind == "Z":
            V, dV = st[0], dst[0]
            return s, V, dV, 1.0
        if self.kind == "Y":
            Y, U, dY, dU = s, st[0], 1.0, dst[0]
        else:
            Y, U = st
            dY, dU = dst
        g = p.gamma
        q = U + (1 - Y) ** 2
        sq = math.sqrt(q)
        m = U / (1 + g) + 1 - Y
        Z = sq / m
        V = (1 - Y) / sq
        Z_Y = -(1 - Y) / (sq * m) + sq / (m * m)
        Z_U = 1 / (2 * sq * m) - sq / (m * m * (1 + g))
        V_Y = -1 / sq + (1 - Y) ** 2 / (q * sq)
        V_U = -(1 - Y) / (2 * q * sq)
        dZ = Z_Y * dY + Z_U * dU
        dV = V_Y * dY + V_U * dU
        return Z, V, dV / dZ, dZ

    def samples(self, n):
        return np.linspace(self.s0, self.s1, n)


class _FloatParams:
    def __init__(self, params):
        self.d = params.d
        self.p = params.p
        self.gamma = float(params.gamma)
        self.ell = float(params.ell)
        self.eps = float(params.eps)
        self.A = float(params.A)
        self.B = float(params.B)
        self.a = float(params.a)
        self.sqrt_ell = math.sqrt(self.ell)


def _scaled_steps(traj, ncomp):
    """Step polynomials rescaled to u = s/h in [0, 1], as float arrays (Horner order)."""
    out = []
    for t0, h, cs in traj.steps:
        arrs = []
        for c in cs[:ncomp]:
            arrs.append(np.array([float(a * h ** k) for k, a in enumerate(c)])[::-1])
        out.append((float(t0), float(h), arrs))
    return out


def _step_evaluator(traj, ncomp):
    steps = _scaled_steps(traj, ncomp)
    lo = [min(t0, t0 + h) for t0, h, _ in steps]
    order = np.argsort(lo)
    lo_sorted = [lo[i] for i in order]

    def ev(s):
        j = bisect.bisect_right(lo_sorted, s) - 1
        j = order[min(max(j, 0), len(order) - 1)]
        t0, h, arrs = steps[j]
        u = (s - t0) / h
        vals = tuple(float(np.polyval(a, u)) for a in arrs)
        ders = tuple(float(np.polyval(np.polyder(a), u)) / h for a in arrs)
        return vals, ders

    return ev


def _series_evaluator(loc, scale):
    # coefficients rescaled by scale**k so that floats do not overflow
    c = np.array([float(a * mpmath.mpf(scale) ** k) for k, a in enumerate(loc.coefficients)])[::-1]
    dc = np.polyder(c)
    sc = float(scale)

    def ev(s):
        u = s / sc
        return (float(np.polyval(c, u)),), (float(np.polyval(dc, u)) / sc,)

    return ev


# ------------------------------------------------------------------ assembly


@dataclass
class GlobalProfile:
    legs: list
    params: object
    kappa_star: object
    V_inf: float
    V_inf_err: float
    a_exponent: float
    far_solution: object = None
    Z2V2: tuple = None
    checks: dict = field(default_factory=dict)
    markers: dict = field(default_factory=dict)
    W_inf: float | None = None
    W_table: list | None = None  # rows (Z, V, W, Phi)
    leg_logW: dict = field(default_factory=dict)

    def to_json(self):
        return {
            "kappa_star": mpmath.nstr(self.kappa_star, 30),
            "gamma": float(self.params.gamma),
            "V_inf": self.V_inf,
            "V_inf_err": self.V_inf_err,
            "W_inf": self.W_inf,
            "a_exponent": self.a_exponent,
            "Z2_V2": list(self.Z2V2) if self.Z2V2 else None,
            "legs": [{"name": l.name, "kind": l.kind, "s0": l.s0, "s1": l.s1} for l in self.legs],
            "markers": self.markers,
            "checks": self.checks,
        }

    def to_csv(self, fh=None):
        out = fh or io.StringIO()
        w = csv.writer(out)
        w.writerow(["Z", "V", "W", "Phi", "U0", "U"])
        for row in self.W_table or []:
            Z, V, W, Phi = map(float, row)
            s = math.sqrt(1 - V * V)
            w.writerow([repr(Z), repr(V), repr(W), repr(Phi), repr(1 / s), repr(V / s)])
        return out.getvalue() if fh is None else None


def _zv_float_rhs(pf):
    d, g, ell = pf.d, pf.gamma, pf.ell

    def field(Z, V):
        one = 1 - V * V
        dV = (d - 1) * one * (one * Z / (g + 1) - V * (1 - V * Z))
        dZ = Z * ((1 - Z * V) ** 2 - ell * (V - Z) ** 2)
        return dV, dZ

    return field


def assemble_global_V(shoot, below, sc=None, zmax=1e4, overlap_tol=1e-6, tol=1e-12):
    """Glue all legs into one curve V(Z) on [0, zmax] and run the far-field checks."""
    sc = sc or ss.ShootConfig(n=shoot.n)
    params = below.params
    pf = _FloatParams(params)
    field_f = _zv_float_rhs(pf)
    legs = []
    checks = {}
    with mpmath.workdps(30):
        oloc = ss.local_solution_origin(params)
    dY = shoot.delta_Y
    legs.append(Leg("origin", "Z", 0.0, dY, _series_evaluator(oloc, dY), pf))
    ftr = shoot.forward_trajectory
    legs.append(Leg("sonic_YU", "Y", ftr.end[0], ftr.nodes[0][0], _step_evaluator(ftr, 1), pf))
    r = float(below.r)
    Yh = float(below.Y_I) / 2
    legs.append(Leg("series", "Y", r, max(Yh, -r), _series_evaluator(below.sonic, r), pf))
    if Yh < -r:
        legs.append(Leg("negative_YU", "Y", -r, Yh, _step_evaluator(below.yu, 1), pf))
    dtr = below.desing.trajectory
    legs.append(Leg("desing", "xi", 0.0, float(below.desing.xi3), _step_evaluator(dtr, 2), pf))

    # junction at the origin point: V from the origin series vs the sonic leg mapped at Y_F
    Zo, Vo = legs[0].zv(dY)[:2]
    Zs, Vs = legs[1].zv(legs[1].s0)[:2]
    checks["origin_junction_rel"] = abs(Vo - Vs) / abs(Vo)
    checks["origin_junction_Z"] = abs(Zo - Zs)
    # overlap of the desingularized leg with the (Y, U) curve on [Y_I', Y_I'/2]
    worst = 0.0
    with mpmath.workdps(below.dps):
        for t, (Y, U) in dtr.nodes:
            if float(t) > float(below.desing.xi1):
                break
            if Y < below.switch[0]:
                continue
            ref = below.U_ref(Y)
            worst = max(worst, float(abs(U - ref) / abs(ref)))
    checks["desing_overlap_rel"] = worst
    if worst > overlap_tol or checks["origin_junction_rel"] > overlap_tol:
        raise OverlapMismatch(json.dumps(checks))

    # far leg
    Z2, V2 = legs[-1].zv(legs[-1].s1)[:2]
    far_m = {
        "Z2_gt_ZV": Z2 - float(ps.Z_V(V2, pf)),
        "ZV_gt_V2": float(ps.Z_V(V2, pf)) - V2,
        "V2_gt_Zminus": V2 - float(ps.Z_minus(V2, pf)),
        "Z2_gt_Zplus": Z2 - float(ps.Z_plus(V2, pf)),
        "V2_in_unit": 1 - abs(V2),
    }
    checks["far_entry_margins"] = far_m
    if min(far_m.values()) <= 0:
        raise NotInFarRegion(json.dumps(far_m))

    def rhs(Z, y):
        dV, dZ = field_f(Z, y[0])
        return [dV / dZ]

    sol = solve_ivp(rhs, (Z2, zmax), [V2], method="DOP853", rtol=tol, atol=tol * 1e-3,
                    dense_output=True)
    if sol.status != 0:
        raise ss.IntegrationFailure(f"far leg: {sol.message}")

    def far_ev(s):
        V = float(sol.sol(s)[0])
        dV, dZ = field_f(s, V)
        return (V,), (dV / dZ,)

    legs.append(Leg("far", "Z", Z2, zmax, far_ev, pf))
    # V decreasing on the far leg, at solver nodes and dense samples
    zs = np.unique(np.concatenate([sol.t, np.geomspace(Z2, zmax, 4000)]))
    slopes = [far_ev(z)[1][0] for z in zs]
    checks["far_V_decreasing"] = bool(max(slopes) < 0)
    checks["far_max_slope"] = float(max(slopes))
    # Richardson with V ~ V_inf + c/Z
    v = lambda z: float(sol.sol(z)[0])
    ext1 = 2 * v(zmax) - v(zmax / 2)
    ext0 = 2 * v(zmax / 2) - v(zmax / 4)
    V_inf = ext1
    V_inf_err = abs(ext1 - ext0)
    checks["V_inf_in_unit"] = bool(-1 < V_inf < 1)

    # node checks on the whole curve
    allZ, ok_range, ok_below, monotone = [], True, True, True
    worst_res = {}
    for leg in legs:
        lastZ = None
        worst_res[leg.name] = 0.0
        for s in leg.samples(400):
            Z, V, dV, dZds = leg.zv(s)
            if not -1 < V < 1:
                ok_range = False
            if Z > 0 and not V < Z:
                ok_below = False
            if lastZ is not None and not Z > lastZ - 1e-15:
                monotone = False
            lastZ = Z
            if Z > 0:
                fv, fz = field_f(Z, V)
                if abs(fv) > 0:
                    worst_res[leg.name] = max(worst_res[leg.name], abs(dV * fz - fv) / abs(fv))
    checks["V_in_unit_interval"] = ok_range
    checks["V_below_Z"] = ok_below
    checks["Z_increasing_along_legs"] = monotone
    checks["max_rel_residual_by_leg"] = worst_res
    a = float(2 * (params.d - 1) / ((params.p - 1) * params.ell * (params.gamma + 1)))
    prof = GlobalProfile(legs=legs, params=params, kappa_star=shoot.kappa_star, V_inf=V_inf,
                         V_inf_err=V_inf_err, a_exponent=a, far_solution=sol, Z2V2=(Z2, V2),
                         checks=checks)
    prof.markers = {**below.desing.markers(), "Y_I_estimate": float(below.Y_I),
                    "Y_I_desing": float(below.Y_I_from_desing), "Y_switch": float(below.switch[0]),
                    "delta_Y": dY, "Z0": float(params.Z0)}
    prof.checks["even_coefficients_max"] = even_coefficient_fit(params)
    return prof


def even_coefficient_fit(params, degree=21, width=0.1, dps=50):
    """Largest even coefficient of a Chebyshev-node fit of the origin leg on [-width, width].

    The origin coefficients come from a recursion over all powers, so odd
    symmetry is an outcome rather than an assumption.
    """
    with mpmath.workdps(dps):
        loc = ss.local_solution_origin(params, order=81)
        n = degree + 1
        nodes = [mpmath.mpf(width) * mpmath.cos(mpmath.pi * (k + mpmath.mpf(1) / 2) / n) for k in range(n)]
        A = mpmath.matrix([[z ** j for j in range(n)] for z in nodes])
        b = mpmath.matrix([loc(z) for z in nodes])
        c = mpmath.lu_solve(A, b)
        return float(max(abs(c[j]) for j in range(0, n, 2)))


# ------------------------------------------------------------------ W and Phi


def J_W(Z, V, dV, pf):
    """d log W / dZ, in whichever of the two equivalent forms is better conditioned."""
    p, ell, g, d = pf.p, pf.ell, pf.gamma, pf.d
    a = 2 * (d - 1) / ((p - 1) * ell * (g + 1))
    one = 1 - V * V
    if abs(1 - V * Z) >= abs(Z - V):
        return (a * V + (2 / (p - 1)) * (Z - V) * dV / one) / (1 - V * Z)
    if Z == V:
        raise SingularIntegrand(f"V = Z at Z = {Z}")
    return (2 / ((p - 1) * ell)) / (Z - V) * (
        (d - 1) * V / Z - (d - 1) / (g + 1) - (Z * V - 1) * dV / one)


def J_W_forms(Z, V, dV, pf):
    """Both forms separately (they agree on solutions)."""
    p, ell, g, d = pf.p, pf.ell, pf.gamma, pf.d
    a = 2 * (d - 1) / ((p - 1) * ell * (g + 1))
    one = 1 - V * V
    f1 = (a * V + (2 / (p - 1)) * (Z - V) * dV / one) / (1 - V * Z)
    # the V equation divided by C has right side (d-1) D/(C Z) = (d-1) V/Z
    f2 = (2 / ((p - 1) * ell)) / (Z - V) * (
        (d - 1) * V / Z - (d - 1) / (g + 1) - (Z * V - 1) * dV / one)
    return f1, f2


def compute_W_Phi(profile, rtol=1e-12, samples_per_leg=400):
    """log W and Phi along every leg, W(0) = 1 and Phi(0) = 0.

    Each leg integrates d(log W, Phi)/ds in its own parameter with DOP853; an
    independent adaptive quadrature of J_W gives log W a second time.
    """
    pf = profile.legs[0].p
    q = (pf.p - 1) / 2
    logW, Phi = 0.0, 0.0
    table = []
    quad_logW = 0.0
    worst_route = 0.0
    for leg in profile.legs:
        def rhs(s, y, leg=leg):
            Z, V, dV, dZ = leg.zv(s)
            if Z > 0 and V >= Z:
                raise SingularIntegrand(f"V >= Z at Z = {Z}")
            jw = J_W(Z, V, dV, pf)
            W = math.exp(y[0])
            return [jw * dZ, V * W ** q / (1 - V * V) ** 1.5 * dZ]

        span = (leg.s0, leg.s1)
        if leg.name == "far":
            ts = np.unique(np.concatenate([np.linspace(leg.s0, min(leg.s1, 10.0), samples_per_leg // 2),
                                           np.geomspace(max(leg.s0, 10.0), leg.s1, samples_per_leg)]))
        else:
            ts = leg.samples(samples_per_leg)
        sol = solve_ivp(rhs, span, [logW, Phi], method="DOP853", rtol=rtol, atol=1e-14, t_eval=ts)
        if sol.status != 0:
            raise ss.IntegrationFailure(f"W/Phi on leg {leg.name}: {sol.message}")
        for s, lw, ph in zip(sol.t, sol.y[0], sol.y[1]):
            Z, V = leg.zv(s)[:2]
            table.append((Z, V, math.exp(lw), ph))
        # second route for log W
        f = lambda s, leg=leg: (lambda Z, V, dV, dZ: J_W(Z, V, dV, pf) * dZ)(*leg.zv(s))
        if leg.name == "far":
            pts = list(np.geomspace(max(leg.s0, 1.0), leg.s1, 40))
            edges = [leg.s0] + [x for x in pts if x > leg.s0]
        else:
            edges = list(np.linspace(leg.s0, leg.s1, 9))
        part = 0.0
        for x0, x1 in zip(edges, edges[1:]):
            part += quad(f, x0, x1, epsabs=1e-13, epsrel=1e-11, limit=200)[0]
        quad_logW += part
        logW, Phi = float(sol.y[0][-1]), float(sol.y[1][-1])
        profile.leg_logW[leg.name] = logW
        worst_route = max(worst_route, abs(quad_logW - logW))
    profile.W_table = table
    a = profile.a_exponent
    far = [(Z, W) for Z, V, W, _ in table if Z >= 1e3]
    WZa = [W * Z ** a for Z, W in far]
    ref = WZa[-1]
    profile.W_inf = ref
    checks = profile.checks
    checks["W0"] = table[0][2]
    checks["Phi0"] = table[0][3]
    checks["W_positive"] = bool(min(t[2] for t in table) > 0)
    checks["WZa_drift_1e3_1e4"] = max(abs(x - ref) / abs(ref) for x in WZa)
    checks["logW_route_difference"] = worst_route
    # far-field rate: Z**2 |J_W + a/Z|
    far_leg = profile.legs[-1]
    zs = np.geomspace(max(100.0, far_leg.s0), far_leg.s1, 50)
    checks["far_JW_rate_max"] = max(
        z * z * abs(J_W(*far_leg.zv(z)[:3], pf) + a / z) for z in zs)
    checks["J_W_at_0"] = J_W(0.0, 0.0, profile.legs[0].zv(0.0)[2], pf)
    checks["J_W_forms_max_rel"] = _forms_gap(profile, pf)
    return profile


def _forms_gap(profile, pf, samples=200):
    """Largest relative gap between the two forms of J_W where both are well conditioned."""
    worst = 0.0
    for leg in profile.legs:
        for s in leg.samples(samples):
            Z, V, dV, _ = leg.zv(s)
            if Z <= 0 or abs(Z - V) < 1e-3 or abs(1 - V * Z) < 1e-3:
                continue
            f1, f2 = J_W_forms(Z, V, dV, pf)
            worst = max(worst, abs(f1 - f2) / max(abs(f1), abs(f2), 1e-300))
    return worst


def build_profile(shoot, sc=None, zmax=1e4):
    below = extend_below_sonic(shoot, sc)
    prof = assemble_global_V(shoot, below, sc, zmax=zmax)
    compute_W_Phi(prof)
    prof.checks["between_U_dY_and_G_n"] = check_between_curves(below, shoot.n)
    prof.below = below
    return prof
