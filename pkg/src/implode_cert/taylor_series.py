"""Power series of the sonic solution U(Y) = sum U_n Y**n at Q_s = (0, eps).

Writing Delta_U(Y, U(Y)) = sum Delta_{U,n} Y**n and likewise for Delta_Y, the
ODE Delta_Y * U' = Delta_U gives, order by order,

    (n lam_- - lam_+) U_n = Delta_{U,n}(u_n = 0)
                            - sum_{2<=i<=n} (n+1-i) U_{n+1-i} Delta_{Y,i}(u_n = 0)

after which Delta_{U,n} += c1 U_n and Delta_{Y,n} += c2 U_n.  The polynomial
structure used throughout:

    Delta_U = F2 U**2 + F1(Y) U,   F2 = 2,  F1 = 2(f + (d-1) Y (1-Y))
    Delta_Y = G1(Y) U + G0(Y),     G1 = dY - 1,  G0 = (Y-1) f
    f = -eps - A Y + B Y**2.

Coefficients are exact in Q[sqrt15] at the limit gamma and mpmath floats
otherwise.  In exact mode the inner convolutions run on raw mpq pairs.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
from gmpy2 import mpq

from .scalar_kernel import QSqrt15, field_to_str, sign

__all__ = [
    "ResonantOrder",
    "ConditioningWarning",
    "catalan",
    "catalan_list",
    "F_polys",
    "G_polys",
    "DeltaWorkspace",
    "SeriesCoeffs",
    "delta_series_step",
    "next_coefficient",
    "compute_series",
    "residual",
    "series_to_csv",
    "truncated_power",
]


class ResonantOrder(ArithmeticError):
    """n lam_- - lam_+ = 0: kappa is an integer and the recursion breaks."""


class ConditioningWarning(RuntimeWarning):
    pass


def catalan(n):
    """n-th Catalan number C(2n, n)/(n+1) as an exact int."""
    if n < 0:
        raise ValueError("n must be >= 0")
    return math.comb(2 * n, n) // (n + 1)


def catalan_list(N):
    out = [1]
    for n in range(N):
        # c_{n+1} = c_n (4n+2)/(n+2)
        out.append(out[-1] * (4 * n + 2) // (n + 2))
    return out


def F_polys(params):
    """Coefficient lists of F_l(Y), l = 0, 1, 2, with Delta_U = sum F_l U**l."""
    d, eps, A, B = params.d, params.eps, params.A, params.B
    zero = params.num(0)
    return [
        [zero],
        [-2 * eps, 2 * (d - 1 - A), 2 * (B - d + 1)],
        [params.num(2)],
    ]


def G_polys(params):
    """Coefficient lists of G_l(Y), l = 0, 1, with Delta_Y = sum G_l U**l."""
    d, eps, A, B = params.d, params.eps, params.A, params.B
    return [
        [eps, A - eps, -(A + B), B],
        [params.num(-1), params.num(d)],
    ]


@dataclass
class DeltaWorkspace:
    DeltaU: list = field(default_factory=list)
    DeltaY: list = field(default_factory=list)

    def cY(self, j, params):
        # d/dU Delta_Y = dY - 1 along Y = xi
        if j == 0:
            return params.num(-1)
        if j == 1:
            return params.num(params.d)
        return params.num(0)

    def cU(self, j, series, params):
        F1 = F_polys(params)[1]
        f1 = F1[j] if j < len(F1) else params.num(0)
        return 4 * series.U[j] + f1

    def e(self, l, series, params):
        """e_l = sum_{0<=j<=l} c_{Y,j} (l+1-j) U_{l+1-j} - c_{U,l}."""
        U = series.U
        acc = params.num(0)
        for j in range(0, min(l, 1) + 1):
            acc = acc + self.cY(j, params) * (l + 1 - j) * U[l + 1 - j]
        return acc - self.cU(l, series, params)

    def a(self, n, m, series, params):
        """a_{n,m} = e_{n-m} + m Delta_{Y,n-m+1}."""
        return self.e(n - m, series, params) + m * self.DeltaY[n - m + 1]


@dataclass
class SeriesCoeffs:
    params: object
    U: list
    catalan: list
    workspace: DeltaWorkspace
    conditioning: list = field(default_factory=list)

    @property
    def gamma(self):
        return self.params.gamma

    @property
    def N(self):
        return len(self.U) - 1

    @property
    def U_hat(self):
        return [u / c for u, c in zip(self.U, self.catalan)]

    def U_hat_at(self, n):
        return self.U[n] / self.catalan[n]

    @property
    def DeltaY(self):
        return self.workspace.DeltaY

    @property
    def DeltaU(self):
        return self.workspace.DeltaU

    def poly(self, n=None):
        from .scalar_kernel import ExactPoly

        n = self.N if n is None else n
        return ExactPoly(self.U[: n + 1])

    def __call__(self, Y, n=None):
        n = self.N if n is None else n
        acc = 0
        for c in reversed(self.U[: n + 1]):
            acc = acc * Y + c
        return acc


# ------------------------------------------------------------- generic steps


def delta_series_step(ws, series, n, params=None, include_un=True):
    """Delta_{U,n}, Delta_{Y,n} from the current coefficients.

    With ``include_un=False`` the top coefficient u_n is treated as 0 (the
    values entering the recursion).  The workspace is updated only when
    include_un is True.
    """
    params = params or series.params
    U = series.U
    zero = params.num(0)
    F1 = F_polys(params)[1]
    G0 = G_polys(params)[0]

    def u(k):
        if k < 0 or k >= len(U) or (k == n and not include_un):
            return zero
        return U[k]

    sq = zero
    for i in range(n + 1):
        sq = sq + u(i) * u(n - i)
    dU = 2 * sq
    for j, c in enumerate(F1):
        dU = dU + c * u(n - j)
    dY = params.d * u(n - 1) - u(n) + (G0[n] if n < len(G0) else zero)
    if include_un:
        _store(ws.DeltaU, n, dU)
        _store(ws.DeltaY, n, dY)
    return dU, dY


def _store(lst, n, v):
    if len(lst) > n:
        lst[n] = v
    else:
        while len(lst) < n:
            lst.append(None)
        lst.append(v)


def next_coefficient(series, ws, n, params=None):
    """Solve for U_n (n >= 2) and update the workspace in place."""
    params = params or series.params
    if n < 2:
        raise ValueError("n >= 2")
    ann = n * params.lam_minus - params.lam_plus
    if sign(ann) == 0:
        raise ResonantOrder(f"n lam_- - lam_+ = 0 at n = {n}")
    # in float mode kappa is only known to about 10**-(dps-10); closer than that is resonant
    if not params.exact and abs(ann) <= mpmath.mpf(10) ** (12 - params.dps) * abs(params.lam_plus):
        raise ResonantOrder(f"n lam_- - lam_+ = 0 to working precision at n = {n}")
    U = series.U
    if len(U) <= n:
        U.append(params.num(0))
    else:
        U[n] = params.num(0)
    dU, dY = delta_series_step(ws, series, n, params, include_un=False)
    rhs = dU
    for i in range(2, n):
        rhs = rhs - (n + 1 - i) * U[n + 1 - i] * ws.DeltaY[i]
    rhs = rhs - U[1] * dY
    Un = rhs / ann
    U[n] = Un
    if not params.exact:
        cond = abs(ann) / abs(params.lam_plus)
        series.conditioning.append(float(cond))
        if cond < 1e-6:
            warnings.warn(f"near-resonant division at n={n}", ConditioningWarning)
    _store(ws.DeltaU, n, dU + params.c1 * Un)
    _store(ws.DeltaY, n, dY + params.c2 * Un)
    return Un


def residual(series, n):
    """r_n = sum_{1<=i<=n} Delta_{Y,i} (n-i+1) U_{n-i+1} - Delta_{U,n}."""
    U, DY, DU = series.U, series.DeltaY, series.DeltaU
    acc = 0
    for i in range(1, n + 1):
        acc = acc + DY[i] * (n - i + 1) * U[n - i + 1]
    return acc - DU[n]


def _init(params):
    U = [params.U0, params.U1]
    ws = DeltaWorkspace()
    ser = SeriesCoeffs(params, U, [], ws)
    zero = params.num(0)
    ws.DeltaU = [zero, params.c1 * params.U1 + params.c3]
    ws.DeltaY = [zero, params.lam_minus]
    return ser, ws


def compute_series(params, N):
    """U_0 .. U_N at the parameters; exact when params.exact."""
    if N < 0:
        raise ValueError("N >= 0")
    if params.exact:
        ser = _compute_exact(params, max(N, 1))
    else:
        with mpmath.workdps(params.dps):
            ser = _compute_generic(params, max(N, 1))
    if N < 1:
        ser.U = ser.U[:1]
        ser.workspace.DeltaU = ser.workspace.DeltaU[:1]
        ser.workspace.DeltaY = ser.workspace.DeltaY[:1]
    ser.catalan = catalan_list(ser.N)
    return ser


def _compute_generic(params, N):
    ser, ws = _init(params)
    for n in range(2, N + 1):
        next_coefficient(ser, ws, n, params)
    return ser


# ------------------------------------------------------------- exact fast path
#
# Same recursion as next_coefficient, unrolled on (a, b) mpq pairs.  Only the
# F1 and G0 coefficients of degree <= 3 enter, so the work per order is two
# convolutions of length n.


def _pairs(x):
    return (x.a, x.b)


def _compute_exact(params, N):
    try:
        return _compute_scaled(params, N)
    except _NotIntegral:
        return _compute_pairs(params, N)


class _NotIntegral(Exception):
    pass


def _den_lcm(xs):
    from math import lcm

    out = 1
    for x in xs:
        out = lcm(out, int(x.a.denominator), int(x.b.denominator))
    return out


def _compute_scaled(params, N):
    """Integer fast path: X_k = s D**k U_k lies in Z[sqrt15] for fixed s, D.

    The scale is guessed from the denominators of the constants and of
    1/lam_+ and verified at every order; any failure falls back to mpq pairs.
    """
    from gmpy2 import mpz

    d = params.d
    F1 = F_polys(params)[1]
    G0 = G_polys(params)[0]
    consts = F1 + G0 + [params.c1, params.c2, params.U0, params.U1, params.lam_plus,
                        params.lam_minus]
    s = _den_lcm(consts)
    ann_inv = [1 / (n * params.lam_minus - params.lam_plus)
               for n in range(2, 4)] if sign(params.lam_minus) else [1 / (-params.lam_plus)]
    D = _den_lcm(consts + ann_inv)
    if sign(params.lam_minus) != 0:
        raise _NotIntegral  # the divisor changes with n; no fixed scale
    inv = ann_inv[0]
    ia, ib = inv.a, inv.b
    c1 = (params.c1.a, params.c1.b)

    def to_int(q, scale):
        a, b = q.a * scale, q.b * scale
        if a.denominator != 1 or b.denominator != 1:
            raise _NotIntegral
        return (mpz(a.numerator), mpz(b.numerator))

    X = [to_int(params.U0, s), to_int(params.U1, s * D)]
    # Yd_i = s D**i Delta_{Y,i}
    Yd = [(mpz(0), mpz(0)), to_int(params.lam_minus, s * D)]
    Fq = [(c.a, c.b) for c in F1]
    Gq = [(c.a, c.b) for c in G0]
    U = [params.U0, params.U1]
    DY = [params.num(0), params.lam_minus]
    DU = [params.num(0), params.c1 * params.U1 + params.c3]
    Dp = mpz(D)
    ss = mpz(s)
    for n in range(2, N + 1):
        # (U^2)_n without U_0 U_n: sum X_i X_{n-i} / (s^2 D^n)
        sa = sb = mpz(0)
        i, j = 1, n - 1
        while i < j:
            x, y = X[i], X[j]
            sa += x[0] * y[0] + 15 * x[1] * y[1]
            sb += x[0] * y[1] + x[1] * y[0]
            i += 1
            j -= 1
        sa, sb = 2 * sa, 2 * sb
        if i == j:
            x = X[i]
            sa += x[0] * x[0] + 15 * x[1] * x[1]
            sb += 2 * x[0] * x[1]
        # sum_{2<=i<n} (n+1-i) U_{n+1-i} Delta_{Y,i}: / (s^2 D^(n+1))
        ta = tb = mpz(0)
        for i in range(2, n):
            x, y = X[n + 1 - i], Yd[i]
            w = n + 1 - i
            ta += w * (x[0] * y[0] + 15 * x[1] * y[1])
            tb += w * (x[0] * y[1] + x[1] * y[0])
        Dn = Dp ** n
        den1 = ss * ss * Dn
        den2 = den1 * Dp
        sq = QSqrt15(mpq(sa, den1), mpq(sb, den1))
        conv = QSqrt15(mpq(ta, den2), mpq(tb, den2))
        dU = 2 * sq
        for k in (1, 2):
            if k < len(F1) and n - k >= 0:
                dU = dU + F1[k] * U[n - k]
        dY = d * U[n - 1] + (G0[n] if n < len(G0) else 0)
        rhs = dU - conv - U[1] * dY
        un = rhs * inv
        U.append(un)
        X.append(to_int(un, s * D ** n))
        DU.append(dU + params.c1 * un)
        dyn = dY + params.c2 * un
        DY.append(dyn)
        Yd.append(to_int(dyn, s * D ** n))
    ws = DeltaWorkspace()
    ws.DeltaU = DU
    ws.DeltaY = DY
    return SeriesCoeffs(params, U, [], ws)


def _compute_pairs(params, N):
    d = params.d
    F1 = [_pairs(c) for c in F_polys(params)[1]]
    G0 = [_pairs(c) for c in G_polys(params)[0]]
    c1, c2 = _pairs(params.c1), _pairs(params.c2)
    lm, lp = _pairs(params.lam_minus), _pairs(params.lam_plus)
    U = [_pairs(params.U0), _pairs(params.U1)]
    zero = (mpq(0), mpq(0))

    def mul(x, y):
        return (x[0] * y[0] + 15 * x[1] * y[1], x[0] * y[1] + x[1] * y[0])

    DY = [zero, lm]
    DU = [zero, _pairs(params.c1 * params.U1 + params.c3)]
    for n in range(2, N + 1):
        # (U^2)_n without the U_0 U_n terms, by symmetry
        sa = sb = mpq(0)
        i, j = 1, n - 1
        while i < j:
            x, y = U[i], U[j]
            sa += x[0] * y[0] + 15 * x[1] * y[1]
            sb += x[0] * y[1] + x[1] * y[0]
            i += 1
            j -= 1
        sa, sb = 2 * sa, 2 * sb
        if i == j:
            x = U[i]
            sa += x[0] * x[0] + 15 * x[1] * x[1]
            sb += 2 * x[0] * x[1]
        dUa, dUb = 2 * sa, 2 * sb
        for k in (1, 2):
            if k < len(F1) and n - k >= 0:
                t = mul(F1[k], U[n - k])
                dUa += t[0]
                dUb += t[1]
        dYa = d * U[n - 1][0]
        dYb = d * U[n - 1][1]
        if n < len(G0):
            dYa += G0[n][0]
            dYb += G0[n][1]
        # rhs = dU - sum_{2<=i<n} (n+1-i) U_{n+1-i} DY_i - U_1 dY
        ra, rb = dUa, dUb
        for i in range(2, n):
            x, y = U[n + 1 - i], DY[i]
            w = n + 1 - i
            ra -= w * (x[0] * y[0] + 15 * x[1] * y[1])
            rb -= w * (x[0] * y[1] + x[1] * y[0])
        t = mul(U[1], (dYa, dYb))
        ra -= t[0]
        rb -= t[1]
        ann = (n * lm[0] - lp[0], n * lm[1] - lp[1])
        nrm = ann[0] * ann[0] - 15 * ann[1] * ann[1]
        if nrm == 0:
            raise ResonantOrder(f"n lam_- - lam_+ = 0 at n = {n}")
        inv = (ann[0] / nrm, -ann[1] / nrm)
        un = mul((ra, rb), inv)
        U.append(un)
        t1 = mul(c1, un)
        t2 = mul(c2, un)
        DU.append((dUa + t1[0], dUb + t1[1]))
        DY.append((dYa + t2[0], dYb + t2[1]))
    ws = DeltaWorkspace()
    ws.DeltaU = [QSqrt15(*x) for x in DU]
    ws.DeltaY = [QSqrt15(*x) for x in DY]
    ser = SeriesCoeffs(params, [QSqrt15(*x) for x in U], [], ws)
    return ser


# ------------------------------------------------------------- truncations


def truncated_power(U, N, l, order):
    """Coefficients 0..order of (sum_{i<=N} U_i Y**i)**l by repeated products."""
    trunc = list(U[: N + 1])
    out = [1] + [0] * order
    for _ in range(l):
        new = [0] * (order + 1)
        for i, a in enumerate(out):
            if sign(a) == 0:
                continue
            for j in range(0, min(len(trunc), order + 1 - i)):
                new[i + j] = new[i + j] + a * trunc[j]
        out = new
    return out


def series_to_csv(series, fh=None, digits=None):
    """Write n, U_n, U_hat_n, catalan_n (exact strings or floats)."""
    own = fh is None
    fh = fh or io.StringIO()
    w = csv.writer(fh, lineterminator="\n")
    if series.params.exact:
        w.writerow(["n", "U_n", "U_hat_n", "catalan_n"])
        for n, u in enumerate(series.U):
            c = series.catalan[n]
            w.writerow([n, field_to_str(u), field_to_str(u / c), c])
    else:
        w.writerow(["n", "U_n", "U_hat_n", "catalan_n", "conditioning"])
        cond = [None, None] + list(series.conditioning)
        nd = digits or 17
        for n, u in enumerate(series.U):
            c = series.catalan[n]
            w.writerow([n, mpmath.nstr(u, nd), mpmath.nstr(u / c, nd), c,
                        "" if cond[n] is None else repr(cond[n])])
    if own:
        return fh.getvalue()
    return None
