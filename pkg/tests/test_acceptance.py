"""Acceptance criteria 1-8, one pass/fail line each.

Run alone with ``python3 tests/test_acceptance.py`` or ``pytest tests/test_acceptance.py -s``.
"""

import dataclasses
import json
import sys
import time
import warnings

import mpmath
import pytest

from implode_cert import cli
from implode_cert import induction_verifier as iv
from implode_cert import phase_system as ps
from implode_cert import shooting_solver as ss
from implode_cert.barrier_certifier import certify_all
from implode_cert.parameters import Config, derive_params
from implode_cert.scalar_kernel import field_from_str
from implode_cert.taylor_series import catalan_list, residual


def test_criterion_1_coefficient_regeneration(tmp_path, acceptance, exact_series):
    outs, times = [], []
    for sub in ("a", "b"):
        t0 = time.perf_counter()
        code = cli.main(["coeffs", "--limit-gamma", "--N", "500", "--out", str(tmp_path / sub), "--quiet"])
        times.append(time.perf_counter() - t0)
        assert code == 0
        outs.append((tmp_path / sub / "coeffs.csv").read_bytes())
    rows = outs[0].decode().strip().splitlines()[1:]
    parsed = [field_from_str(r.split(",")[1]) for r in rows]
    ok = (max(times) < 60 and outs[0] == outs[1] and len(rows) == 501
          and parsed[: exact_series.N + 1] == exact_series.U)
    acceptance(1, ok, f"rows={len(rows)} max_time={max(times):.2f}s identical={outs[0] == outs[1]}")
    assert ok


def test_criterion_2_base_case_and_mutations(acceptance, exact_series, rng):
    ip = iv.InductionParams()
    assert (ip.Cbar1, ip.delta_hat, ip.n0, ip.j0, ip.N, ip.n1) == (
        iv.Fraction(1246, 100), iv.Fraction(49, 1000), 20, 25, 30, 450)
    base = iv.check_base_case(exact_series, ip).merge(iv.check_growth_conditions(exact_series, ip))
    Uh = [exact_series.U_hat_at(n) for n in range(ip.n1 + 1)]
    ks = sorted(int(k) for k in rng.choice(ip.n1 + 1, size=20, replace=False))
    undetected = []
    for k in ks:
        m = iv.mutate_U_hat(Uh, k)
        rep = iv.check_base_case(exact_series, ip, U_hat=m).merge(
            iv.check_growth_conditions(exact_series, ip, U_hat=m))
        if rep.passed:
            consts = iv.compute_constants(exact_series, ip, m)
            rep = rep.merge(iv.check_induction_claim(consts, exact_series.params, ip, m))
        if rep.passed:
            undetected.append(k)
    ok = base.passed and not undetected
    acceptance(2, ok, f"clauses={len(base.checks)} passed={base.passed} "
                      f"mutations={len(ks)} undetected={undetected}")
    assert ok


def test_criterion_3_induction_claims(acceptance, exact_series):
    rep, consts = iv.verify_all(exact_series)
    claims = [c for c in rep.to_json(digits=40)["checks"] if c["name"].startswith("claim_")]

    def digits(s):
        return len(s.split("e")[0].replace("-", "").replace(".", "").lstrip("0"))

    enough = all(digits(c[side]) >= 30 for c in claims for side in ("lhs", "rhs"))
    ok = len(claims) == 3 and all(c["passed"] for c in claims) and enough
    for c in claims:
        print(f"  {c['name']}: {c['lhs']} < {c['rhs']}")
    acceptance(3, ok, f"claims={[c['name'] for c in claims]} C_E={consts.to_json(digits=12)['C_E']}")
    assert ok


def test_criterion_4_barrier_certificates(acceptance, exact_params):
    fb, certs, wall = certify_all(exact_params)
    intervals_ok = all(
        [field_from_str(x) for x in c.certificate.to_json()["interval"]] == [0, iv.Fraction(1, 4)]
        for c in certs if c.certificate is not None)
    ok = (all(c.passed and c.margin > 0 and c.proof_grade for c in certs)
          and intervals_ok and wall < 60)
    worst = min(certs, key=lambda c: c.margin)
    acceptance(4, ok, f"certificates={len(certs)} min_margin={worst.condition}:"
                      f"{mpmath.nstr(worst.margin.to_mpf(), 6)} wall={wall:.4f}s")
    assert ok


@pytest.mark.slow
def test_criterion_5_shooting(acceptance, shoot, profile):
    gl = shoot.glued
    res = profile.checks["max_rel_residual_by_leg"]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        half = ss.find_kappa(101, dataclasses.replace(ss.ShootConfig(n=101), tol=shoot_tol() / 2))
    with mpmath.workdps(50):
        shift = abs(half.kappa_star - shoot.kappa_star)
    ok = (101 < shoot.kappa_star < 102 and abs(shoot.g_star) < 1e-8 and gl["passed"]
          and gl["V_in_unit_interval"] and gl["V_below_Z"]
          and profile.checks["V_in_unit_interval"] and profile.checks["V_below_Z"]
          and max(res.values()) < 1e-6 and shift < 1e-8
          and set(shoot.bracket_classes) == {"ExitLower_EB2", "ExitUpper_EB1"})
    acceptance(5, ok, f"n=101 kappa*={mpmath.nstr(shoot.kappa_star, 20)} g={float(shoot.g_star):.1e} "
                      f"max_residual={max(res.values()):.1e} half_tol_shift={float(shift):.1e}")
    assert ok


def shoot_tol():
    return ss.ShootConfig().tol


@pytest.mark.slow
def test_criterion_6_desingularized_crossing(acceptance, profile):
    seg = profile.below.desing
    dc = seg.checks
    ok = (seg.xi1 < seg.xi2 < seg.xi3 and dc["passed"] and dc["nodes_checked"] > 0
          and all(v > 0 for v in dc["min_margins"].values()))
    acceptance(6, ok, f"xi=({float(seg.xi1):.4f}, {float(seg.xi2):.4f}, {float(seg.xi3):.4f}) "
                      f"nodes={dc['nodes_checked']} min_margin={min(dc['min_margins'].values()):.2e}")
    assert ok


@pytest.mark.slow
def test_criterion_7_profile_asymptotics(acceptance, profile):
    c = profile.checks
    ok = (c["far_V_decreasing"] and -1 < profile.V_inf < 1 and c["WZa_drift_1e3_1e4"] < 1e-3
          and c["W0"] == 1.0 and c["Phi0"] == 0.0 and c["even_coefficients_max"] < 1e-10)
    acceptance(7, ok, f"V_inf={profile.V_inf:.10f} drift={c['WZa_drift_1e3_1e4']:.1e} "
                      f"W0={c['W0']} Phi0={c['Phi0']} even_max={c['even_coefficients_max']:.1e}")
    assert ok


def test_criterion_8_oracle_cross_checks(acceptance, exact_series, rng):
    cat = catalan_list(201)
    catalan_ok = all(sum(cat[i] * cat[n - i] for i in range(n + 1)) == cat[n + 1] for n in range(201))
    P = derive_params(Config(gamma_mode="kappa_target", kappa=101.5, dps=30))
    worst_rt = mpmath.mpf(0)
    with mpmath.workdps(30):
        for v, s in rng.uniform(1e-6, 1 - 1e-6, size=(10_000, 2)):
            V = mpmath.mpf(v)
            Z = mpmath.mpf(s) / V
            Z2, V2 = ps.ZV_of_YU(*ps.YU_of_ZV(Z, V, P), P)
            worst_rt = max(worst_rt, abs(Z2 - Z) / Z, abs(V2 - V) / V)
        Q = (mpmath.mpf(0), P.eps)
        fd = {
            "c1": mpmath.diff(lambda y, u: ps.field_YU(y, u, P)[0], Q, (0, 1)),
            "c2": mpmath.diff(lambda y, u: ps.field_YU(y, u, P)[1], Q, (0, 1)),
            "c3": mpmath.diff(lambda y, u: ps.field_YU(y, u, P)[0], Q, (1, 0)),
            "c4": mpmath.diff(lambda y, u: ps.field_YU(y, u, P)[1], Q, (1, 0)),
        }
        worst_grad = max(abs(fd[k] - getattr(P, k)) / abs(getattr(P, k)) for k in fd)
    residual_ok = all(residual(exact_series, n) == 0 for n in range(1, 51))
    ok = catalan_ok and worst_rt < 1e-12 and worst_grad < 1e-6 and residual_ok
    acceptance(8, ok, f"catalan_n<=200={catalan_ok} roundtrip_max={float(worst_rt):.1e} "
                      f"grad_rel={float(worst_grad):.1e} residual_zero_n<=50={residual_ok}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-s"]))
