"""Far-field and local barriers for the (Y, U) ODE and their sign certificates.

Far-field conditions are reduced to polynomial statements Y**i g(Y) > 0 on
[0, Y_O] and certified with ``poly_sign_on``.  Rational barriers are cleared
by (dY - 1) or (dY - 1)**2, both of known sign on [0, 1/d].  Local barriers
only get sampled evidence: their validity is an asymptotic statement in n.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath

from .scalar_kernel import ExactPoly, QSqrt15, SignCertificate, field_to_str, poly_sign_on, sign

__all__ = [
    "CertificateFailed",
    "FarBarriers",
    "LocalBarrier",
    "BarrierCertificate",
    "LocalEvidence",
    "build_far_barriers",
    "barrier_polys",
    "certify_prop_bar_f",
    "certify_limit_lemma",
    "limit_constants",
    "make_local_barrier",
    "local_barrier_poly",
    "eval_local_barrier_sign",
    "default_beta",
    "certify_all",
]

Y = ExactPoly([0, 1])


class CertificateFailed(RuntimeError):
    def __init__(self, condition, interval=None, detail=""):
        super().__init__(f"{condition} failed on {interval}: {detail}")
        self.condition = condition
        self.interval = interval


def _P(coeffs):
    return ExactPoly(coeffs)


# ------------------------------------------------------------------ far field


@dataclass
class FarBarriers:
    U0: object
    U1: object
    e1: object
    e2: object
    d: int

    @property
    def upper_poly(self):
        return _P([self.U0, self.U1, 2])

    @property
    def lower_num(self):
        return _P([-self.U0, self.e1, self.e2])

    @property
    def lower_den(self):
        return _P([-1, self.d])

    def upper(self, y):
        return self.upper_poly(y)

    def lower(self, y):
        return self.lower_num(y) / self.lower_den(y)


def _field_polys(params):
    """f, G0 = (Y - 1) f and h = f + (d-1) Y (1 - Y) as polynomials."""
    f = _P([-params.eps, -params.A, params.B])
    G0 = (Y - 1) * f
    h = f + (params.d - 1) * Y * (1 - Y)
    return f, G0, h


def _series_coeff(num, den, k):
    """Taylor coefficient k at 0 of num/den (den(0) != 0)."""
    q = []
    for j in range(k + 1):
        acc = num[j]
        for i in range(1, j + 1):
            acc = acc - den[i] * q[j - i]
        q.append(acc / den[0])
    return q[k]


def _lower_P_cleared(N, D, params):
    """D**2 * (B_l' Delta_Y(Y, B_l) - Delta_U(Y, B_l)) with B_l = N/D."""
    _, G0, h = _field_polys(params)
    return (N.deriv() * D - D.deriv() * N) * (N + G0) - 2 * N * (N + D * h)


def build_far_barriers(params, series=None):
    """e1 from the slope condition, e2 from the second-derivative condition = -40."""
    d = params.d
    U0, U1 = params.U0, params.U1
    e1 = d * U0 - U1
    D = _P([-1, d])

    def second(e2):
        N = _P([-U0, e1, e2])
        # second derivative at 0 = 2 * [Y^2] of cleared / D**2
        return 2 * _series_coeff(_lower_P_cleared(N, D, params), D * D, 2)

    zero = params.num(0)
    one = params.num(1)
    c0 = second(zero)
    slope = second(one) - c0
    if sign(slope) == 0:
        raise CertificateFailed("lower_curvature", None, "condition does not depend on e2")
    e2 = (params.num(-40) - c0) / slope
    fb = FarBarriers(U0=U0, U1=U1, e1=e1, e2=e2, d=d)
    check = second(e2) + 40
    if params.exact and sign(check) != 0:
        raise CertificateFailed("lower_curvature", None, "e2 does not solve the condition")
    return fb


def barrier_polys(fb, params):
    """Polynomial forms of the far-field conditions, each to be shown > 0 on (0, Y_O].

    Returns {name: (poly, note)}; note records the cleared factor and its sign.
    """
    d = params.d
    f, G0, h = _field_polys(params)
    N, D = fb.lower_num, fb.lower_den
    Bu = fb.upper_poly
    dY_Bu = D * Bu + G0
    dU_Bu = 2 * Bu * (Bu + h)
    out = {
        # U_dY - B_l = -Delta_Y(Y, B_l)/D and D < 0
        "lower_below_U_dY": (N + G0, "U_dY - B_l = -(N + G0)/(dY-1); dY-1 < 0 on [0, 1/d)"),
        # B_u - U_dU is already polynomial
        "upper_above_U_dU": (Bu + h, "B_u - U_dU = B_u + f + (d-1)Y(1-Y)"),
        # B_l - B_u = (N - D B_u)/D and D < 0
        "lower_above_upper": (D * Bu - N, "B_l - B_u = (N - (dY-1)B_u)/(dY-1); dY-1 < 0"),
        "lower_flow": (-_lower_P_cleared(N, D, params),
                         "-(dY-1)^2 P_l; (dY-1)^2 > 0 on [0, 1/d)"),
        "upper_flow": (Bu.deriv() * dY_Bu - dU_Bu, "polynomial, no clearing"),
    }
    return out


@dataclass
class BarrierCertificate:
    condition: str
    verdict: str
    gamma_mode: str
    proof_grade: bool
    margin: object = None
    factor_power: int = 0
    note: str = ""
    certificate: SignCertificate | None = None
    scalars: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def passed(self):
        return self.verdict in ("Positive", "holds")

    def to_json(self):
        out = {
            "condition": self.condition,
            "verdict": self.verdict,
            "gamma_mode": self.gamma_mode,
            "proof_grade": self.proof_grade,
            "factor_power": self.factor_power,
            "note": self.note,
            "margin": None if self.margin is None else field_to_str(self.margin),
            "margin_digits": None if self.margin is None else _digits(self.margin),
            "wall_time_s": round(self.wall_time, 4),
        }
        if self.scalars:
            out["scalars"] = {k: field_to_str(v) for k, v in self.scalars.items()}
        if self.certificate is not None:
            out["certificate"] = self.certificate.to_json()
        return out


def _digits(x, n=30):
    if isinstance(x, QSqrt15):
        return x.digits(n)
    return mpmath.nstr(mpmath.mpf(x), n)


def _gamma_mode(params):
    return "exact_limit" if params.exact and params.is_limit else "float"


def _poly_certificate(name, poly, note, params, a, b):
    t0 = time.perf_counter()
    i = poly.lowest_order()
    if i is None:
        return BarrierCertificate(name, "Indeterminate", _gamma_mode(params), False,
                                  note="identically zero")
    g = poly.shift_down(i)
    cert = poly_sign_on(g, a, b)
    return BarrierCertificate(
        condition=name, verdict=cert.verdict, gamma_mode=_gamma_mode(params),
        proof_grade=params.exact and params.is_limit, margin=cert.margin, factor_power=i,
        note=note, certificate=cert, wall_time=time.perf_counter() - t0,
    )


def _scalar_certificate(name, value, params, note="", scalars=None):
    return BarrierCertificate(
        condition=name, verdict="Positive" if sign(value) > 0 else "Negative",
        gamma_mode=_gamma_mode(params), proof_grade=params.exact and params.is_limit,
        margin=value, note=note, scalars=scalars or {},
    )


def dZ_dY_linear(params):
    """Sign-carrying part of d/dY Z(Y, U0 + U1 Y) at Y = 0.

    With s = U + (1-Y)**2 and q = U/(1+gamma) + 1 - Y, the derivative equals
    (s' q - 2 s q') / (2 sqrt(s) q**2), so its sign is that of s' q - 2 s q'.
    """
    U0, U1, g = params.U0, params.U1, params.gamma
    s, ds = U0 + 1, U1 - 2
    q, dq = U0 / (1 + g) + 1, U1 / (1 + g) - 1
    return ds * q - 2 * s * dq


def certify_prop_bar_f(fb, params, series=None, interval=None, strict=False):
    """Every far-field condition; exact and proof-grade at the limit gamma."""
    a, b = interval if interval is not None else (0, Fraction(1, params.d))
    certs = []
    B_l2 = 2 * _series_coeff(fb.lower_num, fb.lower_den, 2)
    U2x2 = 2 * params.U2
    certs.append(_scalar_certificate(
        "curvature_at_0", _min_field(U2x2 - 4, B_l2 - U2x2), params,
        note="min(2U_2 - B_u''(0), B_l''(0) - 2U_2)",
        scalars={"B_u''(0)": params.num(4), "U''(0)": U2x2, "B_l''(0)": B_l2}))
    for name, (poly, note) in barrier_polys(fb, params).items():
        certs.append(_poly_certificate(name, poly, note, params, a, b))
    dUdU0 = params.A - (params.d - 1)
    dUg0 = 2 * params.ell * params.gamma + 2
    U1 = params.U1
    certs.append(_scalar_certificate(
        "root_slopes", _min_field(U1, U1 - dUdU0, U1 - dUg0), params,
        note="c = min(U_1, U_1 - U_dU'(0), U_1 - U_g'(0))",
        scalars={"U_1": U1, "U_1 - U_dU'(0)": U1 - dUdU0, "U_1 - U_g'(0)": U1 - dUg0}))
    certs.append(_scalar_certificate(
        "dZ_dY_negative", -dZ_dY_linear(params), params,
        note="negated numerator of dZ/dY at 0 along U_0 + U_1 Y"))
    if strict:
        for c in certs:
            if not c.passed:
                raise CertificateFailed(c.condition, (a, b), c.verdict)
    return certs


def _min_field(*xs):
    out = xs[0]
    for x in xs[1:]:
        if x < out:
            out = x
    return out


def limit_constants(params):
    """V1, V3 and C_inf of the origin expansion."""
    d, g, ell = params.d, params.gamma, params.ell
    V1 = params.num(Fraction(d - 1, d)) / (g + 1)
    V3 = ((d - 1) * (-2 * V1 * V1 / (g + 1) + V1 ** 3 + V1 * V1)
          + V1 * (2 * V1 + ell * (V1 - 1) ** 2)) / (d + 2)
    C_inf = -(g + 1) ** 3 * (V3 - V1 * V1 + V1 ** 3)
    return V1, V3, C_inf


def certify_limit_lemma(fb, params):
    t0 = time.perf_counter()
    V1, V3, C_inf = limit_constants(params)
    YO = params.Y_O
    lhs = (fb.e1 * YO + fb.e2 * YO * YO - params.U0) / params.d
    cert = _scalar_certificate("limit_condition", C_inf - lhs, params,
                               note="C_inf - (e1 Y_O + e2 Y_O^2 - U_0)/d",
                               scalars={"lhs": lhs, "C_inf": C_inf, "V1": V1, "V3": V3})
    cert.verdict = "holds" if sign(C_inf - lhs) > 0 else "fails"
    cert.wall_time = time.perf_counter() - t0
    return cert


def certify_all(params, series=None):
    """Far barriers, the far-field conditions and the limit condition, with timing."""
    t0 = time.perf_counter()
    fb = build_far_barriers(params, series)
    certs = certify_prop_bar_f(fb, params, series)
    certs.append(certify_limit_lemma(fb, params))
    return fb, certs, time.perf_counter() - t0


# ------------------------------------------------------------------ local barriers


@dataclass
class LocalBarrier:
    kind: str  # NearUpper, NearLower, GUpper
    n: int
    beta: object
    coefficients: list


def default_beta(n):
    return -8 * n * n


def make_local_barrier(kind, n, series, beta=None):
    """NearUpper/NearLower: sum_{i<=n} U_i Y^i + beta U_n Y^(n+1); GUpper: the plain truncation."""
    if kind not in ("NearUpper", "NearLower", "GUpper"):
        raise ValueError(kind)
    coeffs = list(series.U[: n + 1])
    if kind == "GUpper":
        return LocalBarrier(kind, n, None, coeffs)
    beta = default_beta(n) if beta is None else beta
    coeffs.append(beta * series.U[n])
    return LocalBarrier(kind, n, beta, coeffs)


def _conv(a, b, limit=None):
    n = len(a) + len(b) - 1 if limit is None else limit
    out = [0] * n
    for i, x in enumerate(a):
        if i >= n:
            break
        for j in range(min(len(b), n - i)):
            out[i + j] += x * b[j]
    return out


def local_barrier_poly(lb, params):
    """Coefficients of B' Delta_Y(Y, B) - Delta_U(Y, B) for the barrier B."""
    d = params.d
    B = list(lb.coefficients)
    f = [-params.eps, -params.A, params.B]
    h = [f[0], f[1] + (d - 1), f[2] - (d - 1)]
    G0 = _conv([-1, 1], f)
    dY = _conv([-1, d], B)
    for i, c in enumerate(G0):
        dY[i] += c
    dB = [i * c for i, c in enumerate(B)][1:]
    first = _conv(dB, dY)
    Bh = list(B) + [0] * max(0, 3 - len(B))
    for i, c in enumerate(h):
        Bh[i] += c
    second = [2 * c for c in _conv(B, Bh)]
    n = max(len(first), len(second))
    first += [0] * (n - len(first))
    second += [0] * (n - len(second))
    return [x - y for x, y in zip(first, second)]


@dataclass
class LocalEvidence:
    kind: str
    n: int
    beta: object
    Y_range: tuple
    verdict: str
    min_value: object
    argmin: object
    max_value: object
    argmax: object
    low_order_residual: object
    grid: int
    refinements: int

    def to_json(self):
        s = lambda x: None if x is None else mpmath.nstr(x, 20)  # noqa: E731
        return {
            "kind": self.kind, "n": self.n, "beta": None if self.beta is None else str(self.beta),
            "Y_range": [s(self.Y_range[0]), s(self.Y_range[1])], "verdict": self.verdict,
            "min_value": s(self.min_value), "argmin": s(self.argmin),
            "max_value": s(self.max_value), "argmax": s(self.argmax),
            "low_order_residual": s(self.low_order_residual),
            "grid": self.grid, "refinements": self.refinements,
            "evidence_only": True,
        }


def default_local_range(lb, params):
    kap = params.kappa
    if lb.kind == "GUpper":
        cs = params.C_star
        cs = cs.to_mpf() if isinstance(cs, QSqrt15) else mpmath.mpf(cs)
        return (-2 / (cs * kap), 0)
    m = lb.n
    scale = min(abs((m - kap) * lb.beta) ** (mpmath.mpf(1) / (m - 2)), 1 / abs(mpmath.mpf(lb.beta)))
    return (0, scale / 4)


def eval_local_barrier_sign(lb, params, series=None, Y_range=None, grid=2048, refinements=3):
    """Sample the barrier polynomial; coefficients of order <= n vanish by construction.

    The sign is read from the reduced polynomial R with P = Y**(n+1) R, so the
    evaluation is not swamped by cancellation in the vanishing low orders.
    """
    with mpmath.workdps(params.dps):
        P = local_barrier_poly(lb, params)
        n = lb.n
        scale = max(abs(c) for c in P) or 1
        low = max((abs(c) for c in P[: n + 1]), default=0) / scale
        R = P[n + 1:]
        a, b = Y_range if Y_range is not None else default_local_range(lb, params)
        a, b = mpmath.mpf(a), mpmath.mpf(b)

        def value(y):
            return y ** (n + 1) * mpmath.polyval(R[::-1], y)

        # the range is half-open at 0 for GUpper, open at 0 for the near barriers
        pts = [a + (b - a) * k / grid for k in range(grid + 1)]
        pts = [y for y in pts if y != 0]
        vals = [value(y) for y in pts]
        h = (b - a) / grid
        for _ in range(refinements):
            for key in (min, max):
                k = vals.index(key(vals))
                y0 = pts[k]
                h = h / 2
                for y in (y0 - h, y0 + h):
                    if a <= y <= b and y != 0:
                        pts.append(y)
                        vals.append(value(y))
        kmin = vals.index(min(vals))
        kmax = vals.index(max(vals))
        if vals[kmin] > 0:
            verdict = "Positive"
        elif vals[kmax] < 0:
            verdict = "Negative"
        else:
            verdict = "Mixed"
        return LocalEvidence(lb.kind, n, lb.beta, (a, b), verdict, vals[kmin], pts[kmin],
                             vals[kmax], pts[kmax], low, grid, refinements)


def g_barrier_closed_form(series, n, m, params):
    """P_{n,m} of the truncation barrier from the closed forms, m >= n+1.

    For m >= n+2 the coefficient is (dm/2 - 2)(G^2)_m - ((m+1)/2)(G^2)_{m+1};
    at m = n+2 the top coefficients of f and f + (d-1)Y(1-Y) add
    n U_n B - 2 U_n (B - (d-1)).
    """
    U = series.U
    if m == n + 1:
        return ((n + 1) * params.lam_minus - params.lam_plus) * (-U[n + 1])
    G2 = _conv(list(U[: n + 1]), list(U[: n + 1]))

    def g2(k):
        return G2[k] if k < len(G2) else 0

    out = (Fraction(params.d * m, 2) - 2) * g2(m) - Fraction(m + 1, 2) * g2(m + 1)
    if m == n + 2:
        out = out + n * U[n] * params.B - 2 * U[n] * (params.B - (params.d - 1))
    return out
