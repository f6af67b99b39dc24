"""Scalar constants of the profile problem as functions of (d, p, gamma).

Two numeric modes share one code path:

* exact: gamma is the limit value ell**(-1/2), represented in Q[sqrt 15]
  (available when ell**(-1/2) lies in that field, e.g. d = 4, p = 7);
* float: gamma is an mpmath ``mpf`` and every derived constant is computed at
  the working precision ``Config.dps``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import gmpy2
import mpmath
from gmpy2 import mpq

from .scalar_kernel import QSqrt15, sign, to_q

__all__ = [
    "ConstraintViolation",
    "OutOfMonotoneRange",
    "ConfigError",
    "KAPPA_INF",
    "Config",
    "Params",
    "derive_params",
    "limit_gamma",
    "kappa_of_gamma",
    "kappa_closed_form_ratio",
    "gamma_of_kappa",
    "gamma_of_kappa_closed_form",
    "sonic_point_ZV",
    "load_config",
]


class ConstraintViolation(ValueError):
    pass


class OutOfMonotoneRange(ValueError):
    pass


class ConfigError(ValueError):
    pass


class _KappaInfinity:
    """Tagged sentinel for kappa at the limit gamma (lambda_minus = 0)."""

    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "KAPPA_INF"

    def __float__(self):
        return math.inf


KAPPA_INF = _KappaInfinity()

DELTA = Fraction(1, 20)
DELTA_HAT = Fraction(49, 1000)


@dataclass(frozen=True)
class Config:
    d: int = 4
    p: int = 7
    gamma_mode: str = "exact_limit"  # exact_limit | kappa_target | explicit
    kappa: float | None = None
    gamma_num: int | None = None
    gamma_den: int | None = None
    dps: int = 60
    C_kappa: float = 50.0

    def __post_init__(self):
        if self.d < 4:
            raise ConfigError("d must be >= 4")
        if self.p % 2 == 0 or self.p < 3:
            raise ConfigError("p must be an odd integer >= 3")
        if self.gamma_mode not in ("exact_limit", "kappa_target", "explicit"):
            raise ConfigError(f"unknown gamma_mode {self.gamma_mode!r}")
        if self.gamma_mode == "kappa_target" and self.kappa is None:
            raise ConfigError("gamma_mode=kappa_target needs kappa")
        if self.gamma_mode == "explicit" and (self.gamma_num is None or self.gamma_den is None):
            raise ConfigError("gamma_mode=explicit needs gamma_num and gamma_den")

    @property
    def ell(self):
        return Fraction(4, self.p - 1) + 1


_CONFIG_KEYS = {"d", "p", "gamma_mode", "kappa", "gamma_num", "gamma_den", "dps", "C_kappa"}


def load_config(path):
    """Read a ``key = value`` config file (TOML subset, '#' comments)."""
    vals = {}
    with open(path) as fh:
        for ln, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line or line.startswith("["):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{ln}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            if k not in _CONFIG_KEYS:
                raise ConfigError(f"{path}:{ln}: unknown key {k!r}")
            v = v.strip("'\"")
            if k == "gamma_mode":
                vals[k] = v
            elif k in ("kappa", "C_kappa"):
                vals[k] = float(v)
            else:
                vals[k] = int(v)
    return Config(**vals)


# ---------------------------------------------------------------- exact roots


def _rational_sqrt(q):
    q = to_q(q)
    if q < 0:
        return None
    n, m = int(q.numerator), int(q.denominator)
    rn, rm = gmpy2.isqrt(n), gmpy2.isqrt(m)
    if rn * rn == n and rm * rm == m:
        return mpq(int(rn), int(rm))
    return None


def _field_sqrt(x):
    """Square root inside Q[sqrt15] when it exists, else None."""
    if not isinstance(x, QSqrt15):
        x = QSqrt15(x)
    if x.sign() < 0:
        return None
    if x.b == 0:
        r = _rational_sqrt(x.a)
        if r is not None:
            return QSqrt15(r)
        r = _rational_sqrt(x.a / 15)
        if r is not None:
            return QSqrt15(0, r)
        return None
    # (u + v s)^2 = u^2 + 15 v^2 + 2uv s  ->  u^2 = (a + sqrt(a^2 - 15 b^2))/2
    disc = _rational_sqrt(x.a * x.a - 15 * x.b * x.b)
    if disc is None:
        return None
    for u2 in ((x.a + disc) / 2, (x.a - disc) / 2):
        u = _rational_sqrt(u2)
        if u is not None and u != 0:
            v = x.b / (2 * u)
            cand = QSqrt15(u, v)
            if cand * cand == x and cand.sign() >= 0:
                return cand
            if (-cand) * (-cand) == x and (-cand).sign() >= 0:
                return -cand
    return None


def limit_gamma(cfg, exact=True):
    """gamma* = ell**(-1/2); exact in Q[sqrt15] when possible."""
    ell = cfg.ell
    if exact:
        r = _field_sqrt(QSqrt15(to_q(1 / ell)))
        if r is not None:
            return r
    return 1 / mpmath.sqrt(mpmath.mpf(ell.numerator) / ell.denominator)


# ---------------------------------------------------------------- params


@dataclass(frozen=True)
class Params:
    d: int
    p: int
    ell: object
    gamma: object
    eps: object
    A: object
    B: object
    b: object
    a: object
    c1: object
    c2: object
    c3: object
    c4: object
    lam_plus: object
    lam_minus: object
    kappa: object
    U0: object
    U1: object
    U2: object
    Z0: object
    V0: object
    sqrt_ell: object
    Y_O: object
    C_star: object
    exact: bool
    is_limit: bool
    dps: int = 60
    delta: Fraction = DELTA
    delta_hat: Fraction = DELTA_HAT

    def num(self, x):
        """Convert an exact rational constant into this mode's number type."""
        if self.exact:
            return QSqrt15(to_q(x))
        if isinstance(x, Fraction):
            return mpmath.mpf(x.numerator) / x.denominator
        return mpmath.mpf(x)

    def to_float_params(self, dps=None):
        """Same parameters in mpmath float mode."""
        if not self.exact:
            return self
        cfg = Config(d=self.d, p=self.p, dps=dps or self.dps)
        with mpmath.workdps(cfg.dps):
            g = self.gamma.to_mpf()
        return _derive(cfg, g, exact=False, is_limit=self.is_limit)


def _mk(exact, x):
    if exact:
        return QSqrt15(to_q(x)) if not isinstance(x, QSqrt15) else x
    if isinstance(x, Fraction):
        return mpmath.mpf(x.numerator) / x.denominator
    return mpmath.mpf(x)


def _second_coeff(d, eps, A, B, U0, U1, lam_plus, lam_minus):
    # order-2 coefficient from the sonic recursion with u_2 = 0
    F1 = (-2 * eps, 2 * (d - 1 - A), 2 * (B - d + 1))
    dU2 = 2 * (U1 * U1) + F1[1] * U1 + F1[2] * U0
    G0_2 = -(A + B)
    dY2 = d * U1 + G0_2
    return (dU2 - U1 * dY2) / (2 * lam_minus - lam_plus)


def _derive(cfg, gamma, exact, is_limit):
    d, p = cfg.d, cfg.p
    ellq = cfg.ell
    ell = _mk(exact, ellq)
    if not (float(ellq) + math.sqrt(float(ellq)) < d - 1):
        raise ConstraintViolation("need ell + sqrt(ell) < d - 1")
    if exact:
        sqrt_ell = _field_sqrt(ell)
    else:
        sqrt_ell = mpmath.sqrt(ell)
    one = _mk(exact, 1)
    eps = ell * gamma * gamma - 1
    if is_limit and exact:
        eps = _mk(exact, 0)
    if sign(eps) < 0:
        raise ConstraintViolation("gamma below ell**(-1/2) gives eps < 0")
    A = (d + 1) - (d - 1 - 2 * ell) * gamma
    B = _mk(exact, 2 * d - 1) - ell
    b = (d - 1) / (ell * (gamma + 1)) - 1
    a = 2 * (d - 1) / ((p - 1) * ell * (gamma + 1))
    c1 = 2 * eps
    c2 = -one
    c3 = 2 * eps * (d - 1 - A)
    c4 = (d - 1) * eps + A
    disc = (c1 - c4) * (c1 - c4) + 4 * c2 * c3
    if exact:
        root = _field_sqrt(disc)
        if root is None:
            raise ConfigError("exact mode needs a square discriminant; use float mode")
    else:
        root = mpmath.sqrt(disc)
    lam_plus = (c1 + c4 + root) / 2
    lam_minus = (c1 + c4 - root) / 2
    # U1 is the larger root of c2 U^2 + (c4 - c1) U - c3 = 0, and lam_- = c2 U1 + c4
    U1 = (lam_minus - c4) / c2
    U0 = eps
    if sign(lam_minus) == 0:
        kappa = KAPPA_INF
    else:
        kappa = lam_plus / lam_minus
    U2 = _second_coeff(d, eps, A, B, U0, U1, lam_plus, lam_minus)
    if sign(gamma * sqrt_ell - 1) > 0 or is_limit:
        Z0 = (gamma + 1) * sqrt_ell / (ell * gamma + 1)
        V0 = 1 / (gamma * sqrt_ell)
    else:
        Z0 = V0 = None
    Y_O = _mk(exact, Fraction(1, d))
    C_star = _c_star(cfg, exact)
    return Params(
        d=d, p=p, ell=ell, gamma=gamma, eps=eps, A=A, B=B, b=b, a=a,
        c1=c1, c2=c2, c3=c3, c4=c4, lam_plus=lam_plus, lam_minus=lam_minus,
        kappa=kappa, U0=U0, U1=U1, U2=U2, Z0=Z0, V0=V0, sqrt_ell=sqrt_ell,
        Y_O=Y_O, C_star=C_star, exact=exact, is_limit=is_limit, dps=cfg.dps,
    )


_CSTAR_CACHE = {}


def _c_star(cfg, exact):
    """C* = lim Delta_{Y,2}/lambda_+ as gamma -> ell**(-1/2) (continuous limit)."""
    key = (cfg.d, cfg.p, exact, cfg.dps)
    if key in _CSTAR_CACHE:
        return _CSTAR_CACHE[key]
    d = cfg.d
    g = limit_gamma(cfg, exact=exact)
    ex = isinstance(g, QSqrt15)
    ell = _mk(ex, cfg.ell)
    A = (d + 1) - (d - 1 - 2 * ell) * g
    B = _mk(ex, 2 * d - 1) - ell
    zero = _mk(ex, 0)
    U1 = A
    U2 = _second_coeff(d, zero, A, B, zero, U1, A, zero)
    dY2 = d * U1 - U2 - (A + B)
    val = dY2 / A
    if not exact and ex:
        val = val.to_mpf()
    _CSTAR_CACHE[key] = val
    return val


def derive_params(cfg):
    """All scalar constants for ``cfg``.  Raises ConstraintViolation."""
    if cfg.gamma_mode == "exact_limit":
        g = limit_gamma(cfg, exact=True)
        exact = isinstance(g, QSqrt15)
        with mpmath.workdps(cfg.dps):
            return _derive(cfg, g, exact=exact, is_limit=True)
    with mpmath.workdps(cfg.dps):
        if cfg.gamma_mode == "explicit":
            g = mpmath.mpf(cfg.gamma_num) / cfg.gamma_den
        else:
            g = gamma_of_kappa(cfg.kappa, cfg)
        return _derive(cfg, g, exact=False, is_limit=False)


def params_at_gamma(cfg, gamma):
    """Float-mode params at an explicit mpmath gamma."""
    with mpmath.workdps(cfg.dps):
        return _derive(cfg, mpmath.mpf(gamma), exact=False, is_limit=False)


def kappa_of_gamma(cfg, gamma):
    """kappa = lambda_+/lambda_- evaluated in float mode."""
    ell = mpmath.mpf(cfg.ell.numerator) / cfg.ell.denominator
    d = cfg.d
    eps = ell * gamma * gamma - 1
    A = (d + 1) - (d - 1 - 2 * ell) * gamma
    c1, c2, c3, c4 = 2 * eps, -1, 2 * eps * (d - 1 - A), (d - 1) * eps + A
    root = mpmath.sqrt((c1 - c4) ** 2 + 4 * c2 * c3)
    lp, lm = (c1 + c4 + root) / 2, (c1 + c4 - root) / 2
    return lp / lm


def kappa_closed_form_ratio(cfg, gamma):
    """Right side of (kappa+1)**2/kappa = ((d+1) l g - (d-1-2l))**2 / (2(d-1) l (l g**2 - 1))."""
    ell = mpmath.mpf(cfg.ell.numerator) / cfg.ell.denominator
    d = cfg.d
    num = ((d + 1) * ell * gamma - (d - 1 - 2 * ell)) ** 2
    return num / (2 * (d - 1) * ell * (ell * gamma * gamma - 1))


def gamma_of_kappa(kappa_target, cfg, rel_tol=None):
    """Invert kappa(gamma) by bisection on (ell**(-1/2), gamma_hi).

    kappa decreases from +inf as gamma leaves ell**(-1/2); the bracket is grown
    geometrically until kappa(gamma_hi) < kappa_target.
    """
    if kappa_target <= cfg.C_kappa:
        raise OutOfMonotoneRange(f"kappa {kappa_target} <= C_kappa floor {cfg.C_kappa}")
    with mpmath.workdps(cfg.dps):
        kt = mpmath.mpf(kappa_target)
        gs = limit_gamma(cfg, exact=False)
        step = mpmath.mpf(1) / (kt * kt)
        hi = gs + step
        for _ in range(200):
            if kappa_of_gamma(cfg, hi) < kt:
                break
            step *= 2
            hi = gs + step
        else:
            raise OutOfMonotoneRange("could not bracket kappa")
        lo = gs
        if rel_tol is None:
            rel_tol = mpmath.mpf(10) ** (-(cfg.dps - 10))
        # bisection on the offset h = gamma - gamma*; kappa(gs + h) is decreasing in h
        lo_h, hi_h = mpmath.mpf(0), hi - gs
        for _ in range(4 * cfg.dps + 200):
            mid = (lo_h + hi_h) / 2
            k = kappa_of_gamma(cfg, gs + mid)
            if k > kt:
                lo_h = mid
            else:
                hi_h = mid
            if hi_h - lo_h <= rel_tol * hi_h:
                break
        g = gs + (lo_h + hi_h) / 2
        if abs(kappa_of_gamma(cfg, g) - kt) > mpmath.mpf("1e-12") * kt:
            raise OutOfMonotoneRange("bisection did not converge")
        return g


def gamma_of_kappa_closed_form(kappa_target, cfg):
    """Independent oracle: solve the quadratic relation for gamma directly."""
    with mpmath.workdps(cfg.dps):
        k = mpmath.mpf(kappa_target)
        s = (k + 1) ** 2 / k
        ell = mpmath.mpf(cfg.ell.numerator) / cfg.ell.denominator
        d = cfg.d
        p1 = (d + 1) * ell
        p0 = -(d - 1 - 2 * ell)
        q = 2 * (d - 1) * ell * s
        # (p1 g + p0)^2 - q (ell g^2 - 1) = 0
        a2 = p1 * p1 - q * ell
        a1 = 2 * p1 * p0
        a0 = p0 * p0 + q
        disc = mpmath.sqrt(a1 * a1 - 4 * a2 * a0)
        roots = [(-a1 + disc) / (2 * a2), (-a1 - disc) / (2 * a2)]
        gs = limit_gamma(cfg, exact=False)
        cands = [r for r in roots if r > gs]
        return min(cands)


def sonic_point_ZV(params):
    """(Z0, V0) = ((g+1) sqrt(l)/(l g + 1), 1/(g sqrt(l)))."""
    if params.Z0 is None:
        raise ValueError("sonic point needs gamma >= ell**(-1/2)")
    return params.Z0, params.V0
