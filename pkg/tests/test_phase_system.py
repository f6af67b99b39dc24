import mpmath
import pytest
from hypothesis import assume, given, strategies as st

from implode_cert import phase_system as ps
from implode_cert.parameters import Config, derive_params
from implode_cert.phase_system import RegionTag

DPS = 30


@pytest.fixture(scope="module")
def P():
    return derive_params(Config(gamma_mode="kappa_target", kappa=101.5, dps=DPS))


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), mpmath.mpf(10) ** -(DPS - 5))


unit = st.floats(min_value=1e-3, max_value=1 - 1e-3)


# ------------------------------------------------------------------ fixed points


def test_ZV_fixed_points(P):
    with mpmath.workdps(DPS):
        for Z, V in ((P.Z0, P.V0), (0, 0), (1, 1)):
            dV, dZ = ps.field_ZV(mpmath.mpf(Z), mpmath.mpf(V), P)
            assert abs(dV) < 1e-25 and abs(dZ) < 1e-25


def test_YU_fixed_point_and_axis(P):
    with mpmath.workdps(DPS):
        dU, dY = ps.field_YU(mpmath.mpf(0), P.eps, P)
        assert abs(dU) < 1e-28 and abs(dY) < 1e-28
        assert ps.field_YU(mpmath.mpf("0.3"), 0, P)[0] == 0
        assert ps.field_desingularized(mpmath.mpf(0), P.eps, P) == (dY, dU)


def test_gradient_at_sonic_point(P):
    with mpmath.workdps(DPS):
        Q = (mpmath.mpf(0), P.eps)
        dY = lambda y, u: ps.field_YU(y, u, P)[1]  # noqa: E731
        dU = lambda y, u: ps.field_YU(y, u, P)[0]  # noqa: E731
        fd = {
            "c1": mpmath.diff(dU, Q, (0, 1)),
            "c2": mpmath.diff(dY, Q, (0, 1)),
            "c3": mpmath.diff(dU, Q, (1, 0)),
            "c4": mpmath.diff(dY, Q, (1, 0)),
        }
        for k, v in fd.items():
            assert _rel(v, getattr(P, k)) < 1e-6, k


def test_sonic_point_maps_to_Qs(P):
    with mpmath.workdps(DPS):
        Y, U = ps.YU_of_ZV(P.Z0, P.V0, P)
        assert abs(Y) < 1e-25 and abs(U - P.eps) < 1e-25


def test_exact_sonic_point(exact_params):
    # at the limit gamma the sonic point is (1, 1) and maps exactly to (0, 0)
    p = exact_params
    assert p.Z0 == 1 and p.V0 == 1
    assert ps.Y_of_ZV(p.Z0, p.V0 / 2, p) == 1 - (p.gamma + 1) * (1 - p.V0 / 2) / (p.Z0 * 3 / 2)


# ------------------------------------------------------------------ maps


@given(unit, unit)
def test_roundtrip_ZV(v, s):
    P = derive_params(Config(gamma_mode="kappa_target", kappa=101.5, dps=DPS))
    with mpmath.workdps(DPS):
        V = mpmath.mpf(v)
        Z = mpmath.mpf(s) / V
        Y, U = ps.YU_of_ZV(Z, V, P)
        Z2, V2 = ps.ZV_of_YU(Y, U, P)
        assert _rel(Z2, Z) < 1e-20 and _rel(V2, V) < 1e-20


@given(st.floats(min_value=-3, max_value=0.99), st.floats(min_value=1e-4, max_value=50))
def test_V_below_Z_iff_Y_above_minus_gamma(y, u):
    P = derive_params(Config(gamma_mode="kappa_target", kappa=101.5, dps=DPS))
    with mpmath.workdps(DPS):
        Y, U = mpmath.mpf(y), mpmath.mpf(u)
        assume(abs(Y + P.gamma) > 1e-9)
        Z, V = ps.ZV_of_YU(Y, U, P)
        assert (V < Z) == (Y > -P.gamma)


def test_domain_errors(P):
    with pytest.raises(ps.DomainError):
        ps.YU_of_ZV(mpmath.mpf(2), mpmath.mpf("0.9"), P)
    with pytest.raises(ps.DomainError):
        ps.ZV_of_YU(mpmath.mpf("0.1"), mpmath.mpf(-1), P)


@given(unit, unit)
def test_jacobian_against_finite_differences(v, s):
    P = derive_params(Config(gamma_mode="kappa_target", kappa=101.5, dps=DPS))
    with mpmath.workdps(DPS):
        V = mpmath.mpf(v)
        Z = mpmath.mpf(s) / V
        J = ps.jacobian_M2(Z, V, P)
        fd = [[mpmath.diff(lambda z: ps.Y_of_ZV(z, V, P), Z),
               mpmath.diff(lambda w: ps.Y_of_ZV(Z, w, P), V)],
              [mpmath.diff(lambda z: ps.U_of_ZV(z, V, P), Z),
               mpmath.diff(lambda w: ps.U_of_ZV(Z, w, P), V)]]
        for i in range(2):
            for j in range(2):
                assert _rel(J[i][j], fd[i][j]) < 1e-10


# ------------------------------------------------------------------ fields


@given(st.floats(min_value=-0.7, max_value=0.2), st.floats(min_value=1e-3, max_value=20))
def test_slopes_agree_across_coordinates(y, u):
    P = derive_params(Config(gamma_mode="kappa_target", kappa=101.5, dps=DPS))
    with mpmath.workdps(DPS):
        Y, U = mpmath.mpf(y), mpmath.mpf(u)
        dU, dY = ps.field_YU(Y, U, P)
        assume(abs(dY) > 1e-8)
        slope = dU / dY
        ZY = mpmath.diff(lambda t: ps.Z_of_YU(t, U + slope * (t - Y), P), Y)
        VY = mpmath.diff(lambda t: ps.V_of_YU(t, U + slope * (t - Y), P), Y)
        assume(abs(ZY) > 1e-8)
        Z, V = ps.ZV_of_YU(Y, U, P)
        dV, dZ = ps.field_ZV(Z, V, P)
        assume(abs(dZ) > 1e-12)
        assert abs(VY / ZY - dV / dZ) < 1e-9 * (1 + abs(dV / dZ))


@given(st.floats(min_value=-0.99, max_value=0.99), st.floats(min_value=0, max_value=5))
def test_factored_fields_agree(v, z):
    P = derive_params(Config(gamma_mode="kappa_target", kappa=101.5, dps=DPS))
    with mpmath.workdps(DPS):
        V, Z = mpmath.mpf(v), mpmath.mpf(z)
        assume(abs(V - P.sqrt_ell) > 1e-6 and abs(V + P.sqrt_ell) > 1e-6)
        a, b = ps.field_ZV(Z, V, P), ps.field_ZV_direct(Z, V, P)
        scale = 1 + abs(a[0]) + abs(a[1])
        assert abs(a[0] - b[0]) < 1e-20 * scale and abs(a[1] - b[1]) < 1e-20 * scale


@given(st.floats(min_value=-0.7, max_value=0.9), st.floats(min_value=1e-3, max_value=20))
def test_dZ_in_YU(y, u):
    P = derive_params(Config(gamma_mode="kappa_target", kappa=101.5, dps=DPS))
    with mpmath.workdps(DPS):
        Y, U = mpmath.mpf(y), mpmath.mpf(u)
        Z, V = ps.ZV_of_YU(Y, U, P)
        direct = ps.field_ZV(Z, V, P)[1]
        assume(abs(direct) > 1e-15)
        assert _rel(ps.dZ_in_YU(Y, U, P), direct) < 1e-9


# ------------------------------------------------------------------ root curves


def test_root_curves_at_zero(P):
    with mpmath.workdps(DPS):
        assert abs(ps.U_g(0, P) - P.eps) < 1e-28
        assert abs(ps.U_dY(0, P) - P.eps) < 1e-28


def test_root_curve_monotonicity(P):
    with mpmath.workdps(DPS):
        for k in range(1, 60):
            Y = -P.gamma * k / 60
            assert mpmath.diff(lambda y: ps.U_dY(y, P), Y) > 0
            assert mpmath.diff(lambda y: ps.U_dU(y, P), Y) > 0


def test_poles(P):
    with mpmath.workdps(DPS):
        with pytest.raises(ps.PoleAtRoot):
            ps.U_dY(mpmath.mpf(1) / P.d, P)
        with pytest.raises(ps.PoleAtRoot):
            ps.Z_plus(-P.sqrt_ell, P)
        with pytest.raises(ps.PoleAtRoot):
            ps.Z_minus(P.sqrt_ell, P)
        assert ps.root_curves(mpmath.mpf(1) / P.d, P)["U_dY"] is None


# ------------------------------------------------------------------ regions


@given(st.floats(min_value=-0.79, max_value=-1e-4), st.floats(min_value=0, max_value=1))
def test_triangle_signs(y, t):
    P = derive_params(Config(gamma_mode="kappa_target", kappa=101.5, dps=DPS))
    with mpmath.workdps(DPS):
        Y = mpmath.mpf(y)
        lo, hi = ps.U_dY(Y, P), min(ps.U_dU(Y, P), ps.U_g(Y, P))
        U = lo + (hi - lo) * mpmath.mpf(t)
        tag = ps.classify((Y, U), P)
        dY, dU = ps.field_desingularized(Y, U, P)
        if tag is RegionTag.OmegaTri1:
            assert dY < 0 and dU < 0
        elif tag is RegionTag.OmegaTri2:
            assert dY > 0 and dU < 0
        # the lower half of the band below U_dY is Omega_tri,2
        U2 = lo * mpmath.mpf(t)
        if ps.in_region(RegionTag.OmegaTri2, (Y, U2), P):
            dY2, dU2 = ps.field_desingularized(Y, U2, P)
            assert dY2 > 0 and dU2 < 0


def test_far_region(P):
    with mpmath.workdps(DPS):
        assert ps.classify((mpmath.mpf(5), mpmath.mpf("0.1")), P, coords="ZV") is RegionTag.OmegaFar
        assert ps.classify((mpmath.mpf("0.1"), mpmath.mpf("0.5")), P, coords="ZV") is RegionTag.Outside
        m = ps.region_margins(RegionTag.OmegaFar, (mpmath.mpf(5), mpmath.mpf("0.1")), P)
        assert set(m) == {"V_gt_-1", "V_lt_1", "Z_gt_Zplus", "Z_gt_ZV", "Z_gt_V"}


def test_barrier_region_needs_barriers(P):
    with pytest.raises(ValueError):
        ps.region_margins(RegionTag.OmegaBf, (mpmath.mpf("0.1"), mpmath.mpf(1)), P)
