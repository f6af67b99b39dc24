import json

import mpmath
import pytest

from implode_cert import barrier_certifier as bc
from implode_cert import phase_system as ps
from implode_cert import shooting_solver as ss
from implode_cert.parameters import Config, derive_params

# matched kappa for n = 101, frozen from the shooting run after the checks below
KAPPA_STAR = "101.449823687756330437883"


@pytest.fixture(scope="module")
def P():
    return derive_params(Config(gamma_mode="kappa_target", kappa=101.5, dps=30))


def test_origin_coefficients(P):
    with mpmath.workdps(30):
        V = ss.origin_coefficients(P, 9)
        assert abs(V[1] - mpmath.mpf(P.d - 1) / (P.d * (P.gamma + 1))) < 1e-28
        assert all(V[k] == 0 for k in (0, 2, 4, 6, 8))
        _, V3, _ = bc.limit_constants(P)
        assert abs(V[3] - V3) < 1e-26


def test_origin_series_solves_ode(P):
    with mpmath.workdps(30):
        loc = ss.local_solution_origin(P)
        assert loc.center == "OriginZV" and 0 < loc.eval_radius <= P.Z0
        for Z in (loc.eval_radius / 3, loc.eval_radius / 2):
            V = loc(Z)
            dV, dZ = ps.field_ZV(Z, V, P)
            assert abs(loc.deriv(Z) * dZ - dV) < 1e-12 * abs(dV)


def test_sonic_local_solution(P):
    with mpmath.workdps(30):
        loc = ss.local_solution_sonic(P, 60)
        assert loc(0) == P.eps and loc.deriv(0) == P.U1
        assert loc.center == "SonicYU" and loc.eval_radius > 0


def test_taylor_coefficients_YU_against_odefun(P):
    with mpmath.workdps(30):
        Y0, U0 = mpmath.mpf("0.05"), mpmath.mpf(2)
        c = ss.taylor_coeffs_YU(Y0, U0, ss._MP(P), 30)

        def rhs(y, u):
            dU, dY = ps.field_YU(y, u, P)
            return dU / dY

        sol = mpmath.odefun(rhs, Y0, U0)
        for t in (mpmath.mpf("0.002"), mpmath.mpf("0.005")):
            assert abs(ss._poly_eval(c, t) - sol(Y0 + t)) < 1e-20


def test_taylor_coefficients_desing_against_odefun(P):
    with mpmath.workdps(30):
        Y0, U0 = mpmath.mpf("-0.3"), mpmath.mpf("0.2")
        y, u = ss.taylor_coeffs_desing(Y0, U0, ss._MP(P), 45)

        def rhs(xi, s):
            dU, dY = ps.field_YU(s[0], s[1], P)
            return [dY, dU]

        sol = mpmath.odefun(rhs, 0, [Y0, U0])
        for t in (mpmath.mpf("0.01"), mpmath.mpf("0.03")):
            exact = sol(t)
            assert abs(ss._poly_eval(y, t) - exact[0]) < 1e-20
            assert abs(ss._poly_eval(u, t) - exact[1]) < 1e-20


def _event_location(P, tol):
    with mpmath.workdps(30):
        stop = ss.StopCondition("level", lambda t, s: s[0] - mpmath.mpf("1.8"))
        tr = ss.integrate("YU", (mpmath.mpf("0.05"), (mpmath.mpf(2),)), 1, [stop],
                          tol=tol, t_end=mpmath.mpf("0.2"), params=P)
        ev = tr.first_event("level")
        assert ev is not None and tr.events[-1].kind == "level"
        return ev.location


def test_event_location_stable_under_tolerance(P):
    a = _event_location(P, 1e-14)
    b = _event_location(P, 5e-15)
    assert abs(a - b) < 1e-12


def test_dense_output_matches_nodes(P):
    with mpmath.workdps(30):
        tr = ss.integrate("YU", (mpmath.mpf("0.05"), (mpmath.mpf(2),)), 1, (),
                          tol=1e-14, t_end=mpmath.mpf("0.1"), params=P)
        assert tr.events[-1].kind == "ReachedTarget"
        t, s = tr.nodes[3]
        assert abs(tr.dense(t)[0] - s[0]) < 1e-25
        with pytest.raises(ValueError):
            tr.dense(mpmath.mpf(1))


def test_zv_integration(P):
    with mpmath.workdps(30):
        loc = ss.local_solution_origin(P)
        z0 = loc.eval_radius / 2
        tr = ss.integrate("ZV", (z0, (loc(z0),)), 1, (), tol=1e-12, t_end=loc.eval_radius, params=P)
        assert tr.events[-1].kind == "ReachedTarget"
        assert abs(tr.end[1][0] - float(loc(loc.eval_radius))) < 1e-10


def test_integrate_rejects_bad_input(P):
    with pytest.raises(ValueError):
        ss.integrate("ZV", (0.1, (0.1,)), 1, params=P)
    with pytest.raises(ValueError):
        ss.integrate("XY", (0.1, (0.1,)), 1, params=P, t_end=1)
    with pytest.raises(ValueError):
        ss.integrate("YU", (0.1, (0.1,)), 1, tol_weight="variational", params=None)


def test_even_n_rejected():
    with pytest.raises(ValueError):
        ss.find_kappa(100)


def test_auto_dps_grows_with_kappa():
    assert ss._auto_dps(101, 0.2, 0.002, 1e-12, 30) > ss._auto_dps(51, 0.2, 0.002, 1e-12, 30)


# ------------------------------------------------------------------ full run


@pytest.mark.slow
def test_kappa_star(shoot):
    assert 101 < shoot.kappa_star < 102
    with mpmath.workdps(40):
        assert abs(shoot.kappa_star - mpmath.mpf(KAPPA_STAR)) < 1e-15
    assert abs(shoot.g_star) < 1e-8


@pytest.mark.slow
def test_bracket_exit_classes(shoot):
    a, b = shoot.bracket_classes
    assert {a, b} == {"ExitLower_EB2", "ExitUpper_EB1"}
    lo, hi = shoot.bracket_history[-1]
    assert lo <= shoot.kappa_star <= hi or hi <= shoot.kappa_star <= lo


@pytest.mark.slow
def test_forward_route_agrees(shoot):
    fw = shoot.forward
    assert fw["event"] == "ReachedTarget"
    assert fw["abs_g"] < 1e-8 and fw["agreement"] < 1e-8


@pytest.mark.slow
def test_glued_curve_checks(shoot):
    gl = shoot.glued
    assert gl["passed"], gl
    assert gl["V_in_unit_interval"] and gl["V_below_Z"] and gl["Z_decreasing_in_Y"]


@pytest.mark.slow
def test_result_serializes(shoot):
    js = json.loads(shoot.dumps())
    assert js["n"] == 101 and js["bracket_classes"] == shoot.bracket_classes
    assert float.fromhex(js["kappa_star_hex"]) == shoot.kappa_float
