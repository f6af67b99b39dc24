import io
import json
import math

import mpmath
import pytest
from hypothesis import given, strategies as st

from implode_cert import phase_system as ps
from implode_cert import profile_builder as pb
from implode_cert import shooting_solver as ss
from implode_cert.parameters import Config, derive_params

# far-field limit for n = 101, frozen from the profile run after the checks below
V_INF = -0.0241454768
W_INF = 3.71232106


@pytest.fixture(scope="module")
def P():
    return derive_params(Config(gamma_mode="kappa_target", kappa=101.5, dps=30))


@given(st.floats(min_value=-0.5, max_value=-1e-3), st.floats(min_value=0.1, max_value=50),
       st.floats(min_value=1e-4, max_value=1e-2))
def test_estimate_Y_I_recovers_square_root_turning_point(y_i, c, h):
    # Delta_Y ~ sqrt((Y - Y_I)/c) near a turning point, so Y is quadratic in Delta_Y
    pts = []
    for k in (3, 2, 1):
        D = h * k
        pts.append((y_i + c * D * D, D))
    assert abs(pb.estimate_Y_I(pts) - y_i) < 1e-9 * (1 + abs(y_i) + c * h * h)


def test_estimate_Y_I_uses_last_three_points():
    pts = [(5.0, 9.0), (1.0 + 2 * 0.09, 0.3), (1.0 + 2 * 0.04, 0.2), (1.0 + 2 * 0.01, 0.1)]
    assert abs(pb.estimate_Y_I(pts) - 1.0) < 1e-12


def test_J_W_forms_agree_on_the_origin_series(P):
    pf = pb._FloatParams(P)
    with mpmath.workdps(30):
        loc = ss.local_solution_origin(P)
        for Z in (loc.eval_radius / 4, loc.eval_radius / 2):
            f1, f2 = pb.J_W_forms(float(Z), float(loc(Z)), float(loc.deriv(Z)), pf)
            assert abs(f1 - f2) < 1e-9 * abs(f1)


def test_J_W_at_origin(P):
    pf = pb._FloatParams(P)
    with mpmath.workdps(30):
        V1 = float(ss.origin_coefficients(P, 3)[1])
        loc = ss.local_solution_origin(P)
    assert pb.J_W(0.0, 0.0, V1, pf) == 0.0
    a = pf.a
    limit = a * V1 + 2 / (pf.p - 1) * (1 - V1) * V1
    with mpmath.workdps(30):
        for Z in (1e-4, 1e-5):
            jw = pb.J_W(Z, float(loc(Z)), float(loc.deriv(Z)), pf)
            assert abs(jw / Z - limit) < 1e-6


def test_leg_maps_agree_with_phase_system(P):
    pf = pb._FloatParams(P)
    leg = pb.Leg("t", "Y", -0.1, 0.1, lambda s: ((0.3 + s,), (1.0,)), pf)
    Z, V, dVdZ, dZ = leg.zv(0.05)
    with mpmath.workdps(30):
        Zr, Vr = ps.ZV_of_YU(mpmath.mpf(0.05), mpmath.mpf(0.35), P)
    assert abs(Z - float(Zr)) < 1e-14 and abs(V - float(Vr)) < 1e-14


def test_even_fit_is_odd(P):
    assert pb.even_coefficient_fit(P) < 1e-20


# ------------------------------------------------------------------ full profile


@pytest.mark.slow
def test_legs_in_order(profile):
    names = [l.name for l in profile.legs]
    assert names[0] == "origin" and names[-1] == "far"
    assert names[1:3] == ["sonic_YU", "series"] and "desing" in names


@pytest.mark.slow
def test_curve_checks(profile):
    c = profile.checks
    assert c["V_in_unit_interval"] and c["V_below_Z"] and c["Z_increasing_along_legs"]
    assert max(c["max_rel_residual_by_leg"].values()) < 1e-6
    assert c["origin_junction_rel"] < 1e-6 and c["desing_overlap_rel"] < 1e-6
    assert c["between_U_dY_and_G_n"]["passed"]


@pytest.mark.slow
def test_far_field(profile):
    c = profile.checks
    assert c["far_V_decreasing"] and c["V_inf_in_unit"]
    assert abs(profile.V_inf - V_INF) < 1e-8
    assert profile.V_inf_err < 1e-5
    assert all(v > 0 for v in c["far_entry_margins"].values())
    assert c["WZa_drift_1e3_1e4"] < 1e-3
    assert c["far_JW_rate_max"] < 1e3


@pytest.mark.slow
def test_W_and_Phi_normalization(profile):
    c = profile.checks
    assert c["W0"] == 1.0 and c["Phi0"] == 0.0
    assert c["W_positive"]
    assert c["logW_route_difference"] < 1e-8
    assert c["J_W_at_0"] == 0.0
    assert c["J_W_forms_max_rel"] < 1e-6
    assert c["even_coefficients_max"] < 1e-10
    assert abs(profile.W_inf / W_INF - 1) < 1e-6


@pytest.mark.slow
def test_desing_markers(profile):
    m = profile.markers
    assert m["xi1"] < m["xi2"] < m["xi3"]
    assert abs(m["Y_I_estimate"] - m["Y_I_desing"]) < 1e-6
    dc = profile.below.desing.checks
    assert dc["passed"] and dc["nodes_checked"] > 0
    assert abs(dc["DeltaY_at_xi1"]) < 1e-10 and abs(dc["Y_at_xi2"]) < 1e-10


@pytest.mark.slow
def test_profile_serializes(profile):
    js = json.loads(json.dumps(profile.to_json()))
    assert js["legs"][0]["name"] == "origin"
    buf = io.StringIO()
    profile.to_csv(buf)
    rows = buf.getvalue().strip().splitlines()
    assert rows[0] == "Z,V,W,Phi,U0,U" and len(rows) > 1000
    Z, V, W, Phi, U0, U = map(float, rows[1].split(","))
    assert W == 1.0 and Phi == 0.0 and math.isclose(U0, 1 / math.sqrt(1 - V * V))
