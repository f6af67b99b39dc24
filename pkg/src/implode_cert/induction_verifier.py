"""Finite checks behind the induction on the sonic series at gamma = ell**(-1/2).

Everything is decided exactly in Q[sqrt15].  The O(n1**2) uniform product
bound is evaluated on integer forms (a + b sqrt15)/r so that each comparison
is a handful of big-integer products instead of rational normalisations.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from math import factorial

import mpmath
from gmpy2 import mpz

from .scalar_kernel import QSqrt15, field_to_str, sign, to_q
from .taylor_series import F_polys, G_polys, truncated_power

__all__ = [
    "InductionParams",
    "InductionConstants",
    "CheckResult",
    "VerificationReport",
    "check_base_case",
    "check_growth_conditions",
    "compute_constants",
    "check_induction_claim",
    "verify_all",
    "mutate_U_hat",
]

D_Y, D_U, D_F, D_G = 1, 2, 2, 3
_LOG_FILTER = 1e-6


@dataclass(frozen=True)
class InductionParams:
    l0: int = 2
    n0: int = 20
    j0: int = 25
    N: int = 30
    n1: int = 450
    delta_hat: Fraction = Fraction(49, 1000)
    Cbar1: Fraction = Fraction(1246, 100)
    delta: Fraction = Fraction(1, 20)

    def __post_init__(self):
        if not self.N < (self.n1 - 2) / 2:
            raise ValueError("need N < (n1 - 2)/2")
        if not self.n1 > self.n0 + 2 * self.N:
            raise ValueError("need n1 > n0 + 2N")


@dataclass
class CheckResult:
    name: str
    passed: bool
    witness: dict | None = None
    margin: object = None
    lhs: object = None
    rhs: object = None
    note: str = ""

    def to_json(self, digits=40):
        out = {"name": self.name, "passed": self.passed, "witness": self.witness}
        for k in ("margin", "lhs", "rhs"):
            v = getattr(self, k)
            if v is not None:
                out[k] = _digits(v, digits)
                out[k + "_exact"] = field_to_str(v) if not isinstance(v, float) else repr(v)
        if self.note:
            out["note"] = self.note
        return out


@dataclass
class VerificationReport:
    checks: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def merge(self, other):
        return VerificationReport(self.checks + other.checks, self.wall_time + other.wall_time)

    def to_json(self, digits=40):
        return {
            "passed": self.passed,
            "wall_time_s": round(self.wall_time, 3),
            "checks": [c.to_json(digits) for c in self.checks],
        }


def _digits(x, n=40):
    if isinstance(x, QSqrt15):
        return x.digits(n)
    if isinstance(x, (Fraction,)) or type(x).__name__ == "mpq":
        return QSqrt15(to_q(x)).digits(n)
    if isinstance(x, int):
        return str(x)
    return mpmath.nstr(x, n)


def _q(x):
    return x if isinstance(x, QSqrt15) else QSqrt15(to_q(x))


def _max(xs):
    out = None
    for x in xs:
        if out is None or x > out:
            out = x
    return out


def _min(xs):
    out = None
    for x in xs:
        if out is None or x < out:
            out = x
    return out


# ---------------------------------------------------------------- int forms


def _int_form(x):
    """x = (a + b sqrt15)/r with integers a, b and r > 0."""
    r = math.lcm(int(x.a.denominator), int(x.b.denominator))
    return (mpz(x.a * r), mpz(x.b * r), mpz(r))


def _sgn_int(a, b):
    sa = (a > 0) - (a < 0)
    sb = (b > 0) - (b < 0)
    if sb == 0:
        return sa
    if sa == 0 or sa == sb:
        return sb
    diff = a * a - 15 * b * b
    if diff == 0:
        return 0
    return sa if diff > 0 else sb


def _uhat_list(series, n_max):
    return [series.U_hat_at(n) for n in range(n_max + 1)]


def _log_abs(x):
    if sign(x) == 0:
        return -mpmath.inf
    with mpmath.workdps(30):
        return mpmath.log(abs(x.to_mpf()))


# ---------------------------------------------------------------- coefficient bounds


def _check_unif(H, ip):
    """|U^_j U^_{n-j}| <= Cbar1 |U^_n| for 0 <= j <= n <= n1 (H = |U^|).

    Pairs whose log-slack exceeds _LOG_FILTER are accepted on 30-digit logs;
    the rest are decided exactly on integer forms.
    """
    forms = [_int_form(h) for h in H]
    logs = [float(_log_abs(h)) for h in H]
    C = ip.Cbar1
    logC = math.log(C)
    cn, cd = mpz(C.numerator), mpz(C.denominator)
    best, arg, exact_calls = math.inf, None, 0
    for n in range(ip.n1 + 1):
        an, bn, rn = forms[n]
        for j in range(n // 2 + 1):
            k = n - j
            if logs[j] == -math.inf or logs[k] == -math.inf:
                continue
            slack = logC + logs[n] - logs[j] - logs[k]
            if slack < best:
                best, arg = slack, (n, j)
            if slack > _LOG_FILTER:
                continue
            exact_calls += 1
            aj, bj, rj = forms[j]
            ak, bk, rk = forms[k]
            pa = aj * ak + 15 * bj * bk
            pb = aj * bk + ak * bj
            # sign of cn (an + bn s) rj rk - cd rn (pa + pb s)
            den = rj * rk
            fa = cn * an * den - cd * rn * pa
            fb = cn * bn * den - cd * rn * pb
            if _sgn_int(fa, fb) < 0:
                return CheckResult("unif_product_bound", False, {"n": n, "j": j},
                                   note="|U^_j U^_(n-j)| > Cbar1 |U^_n|")
    n, j = arg
    margin = ip.Cbar1 * H[n] - H[j] * H[n - j]
    return CheckResult("unif_product_bound", True,
                       {"tightest_n": n, "tightest_j": j, "exact_comparisons": exact_calls},
                       margin=margin, lhs=H[j] * H[n - j], rhs=ip.Cbar1 * H[n])


def check_base_case(series, ip=InductionParams(), U_hat=None, C_star=None):
    """Clause (a): product bound, sign, monotonicity, ratio law, Cbar1 > max(1, |U^_0|)."""
    t0 = time.perf_counter()
    Uh = U_hat if U_hat is not None else _uhat_list(series, ip.n1)
    C_star = series.params.C_star if C_star is None else C_star
    H = [abs(u) for u in Uh]
    rep = VerificationReport()
    rep.checks.append(_check_unif(H, ip))

    bad = [n for n in range(ip.n0, ip.n1 + 1) if not Uh[n] > 0]
    mins = _min(Uh[ip.n0: ip.n1 + 1])
    rep.checks.append(CheckResult("sign_positive", not bad,
                                  {"n": bad[0]} if bad else None, margin=mins if not bad else None))

    bad, tight = None, None
    for n in range(ip.n0, ip.n1 + 1):
        diff = H[n] - H[n - 1]
        if not diff > 0:
            bad = n
            break
        if tight is None or H[n - 1] / H[n] > tight[1]:
            tight = (n, H[n - 1] / H[n])
    rep.checks.append(CheckResult(
        "monotone_growth", bad is None, {"n": bad} if bad is not None else {"tightest_n": tight[0]},
        margin=(1 - tight[1]) if bad is None else None))

    c4 = C_star / 4
    bad, tight = None, None
    for n in range(ip.n0, ip.n1 + 1):
        lead = c4 * n * Uh[n - 1]
        lhs = abs(Uh[n] - lead)
        rhs = ip.delta_hat * abs(lead)
        if not lhs <= rhs:
            bad = n
            break
        # slack relative to |lead|
        rel = (rhs - lhs) / abs(lead) if sign(lead) else None
        if rel is not None and (tight is None or rel < tight[1]):
            tight = (n, rel, lhs, rhs)
    if bad is None:
        rep.checks.append(CheckResult("ratio_asymptotics", True, {"tightest_n": tight[0]},
                                      margin=tight[1], lhs=tight[2], rhs=tight[3]))
    else:
        rep.checks.append(CheckResult("ratio_asymptotics", False, {"n": bad}))

    m = _max([_q(1), H[0]])
    ok = _q(ip.Cbar1) > m
    rep.checks.append(CheckResult("Cbar1_dominates_U0", ok, None, margin=_q(ip.Cbar1) - m,
                                  lhs=_q(ip.Cbar1), rhs=m))
    rep.wall_time = time.perf_counter() - t0
    return rep


# ---------------------------------------------------------------- tail and sign bounds


def compute_M1(Uh, ip, C_star):
    c4 = C_star / 4
    vals = []
    for l in range(ip.l0 + 1):
        m = _max([_q(1), abs(Uh[l])])
        vals.append(abs(Uh[ip.n0]) / (factorial(ip.n0) * m) * c4 ** (l - ip.n0))
    return _max(vals)


def check_growth_conditions(series, ip=InductionParams(), U_hat=None, C_star=None):
    t0 = time.perf_counter()
    Uh = U_hat if U_hat is not None else _uhat_list(series, ip.n1)
    C_star = series.params.C_star if C_star is None else C_star
    rep = VerificationReport()
    base = C_star / 4 * (1 - ip.delta_hat) * (ip.n1 + 1 - ip.N - ip.j0)
    bad, tight = None, None
    count = 0
    for j in range(1, ip.j0 + 1):
        for l in range(ip.l0 + 1):
            count += 1
            lhs = base ** (j - 1)
            rhs = 2 ** (j - 1) * abs(Uh[j + l - 1]) / _max([_q(1), abs(Uh[l])])
            if not lhs >= rhs:
                bad = (j, l)
                break
            if j > 1:
                ratio = rhs / lhs
                if tight is None or ratio > tight[1]:
                    tight = ((j, l), ratio, lhs, rhs)
        if bad:
            break
    if bad:
        rep.checks.append(CheckResult("small_index_growth", False, {"j": bad[0], "l": bad[1]}))
    else:
        rep.checks.append(CheckResult("small_index_growth", True,
                                      {"pairs": count, "tightest_j": tight[0][0],
                                       "tightest_l": tight[0][1]},
                                      margin=1 - tight[1], lhs=tight[2], rhs=tight[3]))

    M1 = compute_M1(Uh, ip, C_star)
    # (1/(j0+l0))**l0 (1/M1) (9/5)**j0 / (3 sqrt(j0)) > 1, squared to stay in the field
    core = Fraction(1, ip.j0 + ip.l0) ** ip.l0 * Fraction(9, 5) ** ip.j0 / 3 / M1
    ok = core > 0 and core * core > ip.j0
    lhs_val = None
    with mpmath.workdps(50):
        lhs_val = core.to_mpf() / mpmath.sqrt(ip.j0) if isinstance(core, QSqrt15) else None
    rep.checks.append(CheckResult("M1_condition", ok, {"M1": _digits(M1, 30)},
                                  margin=core * core - ip.j0, lhs=lhs_val, rhs=_q(1)))
    rep.wall_time = time.perf_counter() - t0
    return rep


# ---------------------------------------------------------------- constants


@dataclass
class InductionConstants:
    b2: dict
    b3: object
    q_n1: object
    M1: object
    nu: dict
    C_J1: object
    C_J2: object
    C_J3: object
    C_E: object
    e: list
    DeltaY: list
    C_star: object
    lam_plus: object

    def q(self, n, ip, C_star):
        return Fraction(n - ip.N, 4) * (1 - ip.delta_hat) * C_star

    def to_json(self, digits=40):
        out = {}
        for k in ("b3", "q_n1", "M1", "C_J1", "C_J2", "C_J3", "C_E", "C_star", "lam_plus"):
            out[k] = _digits(getattr(self, k), digits)
        out["b2"] = {str(l): _digits(v, digits) for l, v in sorted(self.b2.items())}
        return out


def _b2(l, Uh, ip):
    if l == -1:
        return _q(1)
    if l < -1:
        raise ValueError("b_{2,l} defined for l >= -1")
    return _q(ip.Cbar1) ** l * _max([_q(1), abs(Uh[1])])


def compute_constants(series, ip=InductionParams(), U_hat=None):
    p = series.params
    Uh = U_hat if U_hat is not None else _uhat_list(series, ip.n1)
    C_star = p.C_star
    U = series.U
    F = F_polys(p)
    G = G_polys(p)
    b2 = {l: _b2(l, Uh, ip) for l in range(-1, ip.l0 + 1)}
    ratios = []
    for i in range(ip.N + 1):
        for l in range(ip.l0 + 1):
            if l == 0:
                ratios.append(_q(1))
            elif sign(Uh[i + l]) != 0:
                ratios.append(abs(Uh[i] / Uh[i + l]))
    b3 = _max(ratios)
    q_n1 = Fraction(ip.n1 - ip.N, 4) * (1 - ip.delta_hat) * C_star
    nu = {}
    tail = Fraction(1, 2 ** ip.N) * _max([
        _max([_q(1), abs(Uh[0])]) * 2 ** (D_G - 1),
        2 * _max([_max([_q(1), abs(Uh[m])]) for m in range(3)]),
    ])
    for l in range(1, D_Y + 1):
        terms = []
        for m in range(ip.N - 1):
            a1 = _q(ip.Cbar1) ** (l - 1) * q_n1 ** (-m)
            a2 = b2[l - 2] * Fraction(1, 2 ** (ip.N - 2 - m))
            terms.append(abs(Uh[m + 2]) * _min([a1, a2]))
        nu[l] = b3 * _max(terms) + tail
    sJ1 = _q(0)
    sJ2 = _q(0)
    for l in range(1, D_Y + 1):
        for j, c in enumerate(G[l]):
            sJ1 = sJ1 + abs(c) * nu[l]
            sJ2 = sJ2 + abs(c) * b2[l - 2] * 2 ** (j + 1)
    C_J1 = 4 ** (D_Y + 2) * sJ1
    C_J2 = Fraction(2 ** (2 * D_G), 2 ** ip.N) * abs(U[1]) * sJ2
    sJ3 = _q(0)
    for l in range(1, D_U + 1):
        for j, c in enumerate(F[l]):
            sJ3 = sJ3 + abs(c) * b2[l - 2] * 2 ** (j + 1)
    C_J3 = Fraction(2 ** (2 * D_Y), 2 ** ip.N) * sJ3
    ws = series.workspace
    e = [ws.e(l, series, p) for l in range(ip.N)]
    C_E = _q(0)
    for l in range(2, ip.N - 1):
        C_E = C_E + (abs(e[l]) / ip.n1 + abs(ws.DeltaY[l + 1])) * (3 * q_n1) ** (-(l - 1))
    M1 = compute_M1(Uh, ip, C_star)
    return InductionConstants(b2=b2, b3=b3, q_n1=q_n1, M1=M1, nu=nu, C_J1=C_J1, C_J2=C_J2,
                              C_J3=C_J3, C_E=C_E, e=e, DeltaY=list(ws.DeltaY[: ip.N + 1]),
                              C_star=C_star, lam_plus=p.lam_plus)


def check_induction_claim(consts, params, ip=InductionParams(), U_hat=None):
    t0 = time.perf_counter()
    rep = VerificationReport()
    c = consts
    lhs1 = (c.C_J2 + c.C_J3 + abs(c.e[1]) + abs(c.DeltaY[2])) / ip.n1 + c.C_J1 + c.C_E
    rhs1 = _q(ip.delta_hat)
    rep.checks.append(CheckResult("claim_i_error_budget", lhs1 < rhs1, None,
                                  margin=rhs1 - lhs1, lhs=lhs1, rhs=rhs1))
    Uh1 = U_hat[1] if U_hat is not None else None
    if Uh1 is None:
        Uh1 = c.b2[0]  # b_{2,0} = max(|U^_1|, 1)
        lhs2 = Uh1
    else:
        lhs2 = _max([_q(1), abs(Uh1)])
    rep.checks.append(CheckResult("claim_ii_q_n1", lhs2 < c.q_n1, None,
                                  margin=c.q_n1 - lhs2, lhs=lhs2, rhs=c.q_n1))
    lhs3 = Fraction(3, 2 * (4 * ip.n1 - 2)) * c.C_star + ip.delta / c.lam_plus
    rhs3 = c.C_star / 4 * ip.delta_hat
    rep.checks.append(CheckResult("claim_iii_ratio_drift", lhs3 < rhs3, None,
                                  margin=rhs3 - lhs3, lhs=lhs3, rhs=rhs3))
    rep.wall_time = time.perf_counter() - t0
    return rep


def verify_all(series, ip=InductionParams()):
    """All clauses of the finite induction checks; returns (report, constants)."""
    t0 = time.perf_counter()
    rep = check_base_case(series, ip)
    rep = rep.merge(check_growth_conditions(series, ip))
    consts = compute_constants(series, ip)
    rep = rep.merge(check_induction_claim(consts, series.params, ip))
    rep.wall_time = time.perf_counter() - t0
    return rep, consts


def mutate_U_hat(Uh, k, factor=1000):
    """Copy of Uh with entry k replaced: x -> factor*x, or factor when x = 0."""
    out = list(Uh)
    out[k] = out[k] * factor if sign(out[k]) != 0 else _q(factor)
    return out
