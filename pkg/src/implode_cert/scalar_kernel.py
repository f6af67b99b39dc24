"""Exact scalars, outward-rounded intervals and certified polynomial signs.

Three kinds of numbers live here:

* ``QSqrt15``: elements a + b*sqrt(15) of the quadratic field Q[sqrt 15],
  with rational a, b.  The limit value gamma = ell**(-1/2) = sqrt(15)/5 for
  (d, p) = (4, 7) sits in this field, so every proof-critical quantity is
  exact.
* ``Interval``: a float interval widened by one ulp per operation.  Used only
  for exploratory numerics.
* ``ExactPoly``: a dense univariate polynomial whose coefficients are exact
  field elements (int, Fraction, mpq or QSqrt15).

``poly_sign_on`` certifies the sign of an ExactPoly on [a, b] with a >= 0 by
bisection and the monotone bound P(t) >= P+(t_i) - P-(t_{i+1}).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational

import gmpy2
from gmpy2 import mpq

__all__ = [
    "DivisionByIntervalContainingZero",
    "QSqrt15",
    "SQRT15",
    "to_q",
    "sign",
    "Interval",
    "interval_ops",
    "ExactPoly",
    "monotone_split",
    "SignCertificate",
    "poly_sign_on",
    "field_to_str",
    "field_from_str",
]


class DivisionByIntervalContainingZero(ZeroDivisionError):
    pass


def to_q(x):
    """Coerce an exact rational-like value to gmpy2.mpq."""
    if isinstance(x, type(mpq())):
        return x
    if isinstance(x, int):
        return mpq(x)
    if isinstance(x, Fraction):
        return mpq(x.numerator, x.denominator)
    if isinstance(x, Rational):
        return mpq(int(x.numerator), int(x.denominator))
    if isinstance(x, str):
        return mpq(x)
    raise TypeError(f"not an exact rational: {x!r}")


_MPQ = type(mpq())
_EXACT = (int, Fraction, _MPQ)


class QSqrt15:
    """Element a + b*sqrt(15) of Q[sqrt 15], immutable."""

    __slots__ = ("a", "b")

    def __init__(self, a=0, b=0):
        object.__setattr__(self, "a", to_q(a))
        object.__setattr__(self, "b", to_q(b))

    def __setattr__(self, k, v):
        raise AttributeError("QSqrt15 is immutable")

    @staticmethod
    def _lift(x):
        if isinstance(x, QSqrt15):
            return x
        if isinstance(x, _EXACT) or isinstance(x, Rational):
            return QSqrt15(x, 0)
        return NotImplemented

    def __add__(self, o):
        o = QSqrt15._lift(o)
        if o is NotImplemented:
            return o
        return QSqrt15(self.a + o.a, self.b + o.b)

    __radd__ = __add__

    def __sub__(self, o):
        o = QSqrt15._lift(o)
        if o is NotImplemented:
            return o
        return QSqrt15(self.a - o.a, self.b - o.b)

    def __rsub__(self, o):
        o = QSqrt15._lift(o)
        if o is NotImplemented:
            return o
        return o - self

    def __neg__(self):
        return QSqrt15(-self.a, -self.b)

    def __pos__(self):
        return self

    def __mul__(self, o):
        if isinstance(o, QSqrt15):
            a, b, c, d = self.a, self.b, o.a, o.b
            return QSqrt15(a * c + 15 * b * d, a * d + b * c)
        if isinstance(o, _EXACT) or isinstance(o, Rational):
            q = to_q(o)
            return QSqrt15(self.a * q, self.b * q)
        return NotImplemented

    __rmul__ = __mul__

    def norm(self):
        return self.a * self.a - 15 * self.b * self.b

    def conj(self):
        return QSqrt15(self.a, -self.b)

    def inverse(self):
        n = self.norm()
        if n == 0:
            raise ZeroDivisionError("division by zero in Q[sqrt15]")
        return QSqrt15(self.a / n, -self.b / n)

    def __truediv__(self, o):
        if isinstance(o, QSqrt15):
            return self * o.inverse()
        if isinstance(o, _EXACT) or isinstance(o, Rational):
            q = to_q(o)
            if q == 0:
                raise ZeroDivisionError("division by zero in Q[sqrt15]")
            return QSqrt15(self.a / q, self.b / q)
        return NotImplemented

    def __rtruediv__(self, o):
        o = QSqrt15._lift(o)
        if o is NotImplemented:
            return o
        return o * self.inverse()

    def __pow__(self, k):
        if not isinstance(k, int):
            return NotImplemented
        if k < 0:
            return self.inverse() ** (-k)
        out, base = QSqrt15(1), self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def sign(self):
        """Exact sign, comparing a**2 against 15*b**2 when a and b disagree."""
        sa = (self.a > 0) - (self.a < 0)
        sb = (self.b > 0) - (self.b < 0)
        if sb == 0:
            return sa
        if sa == 0 or sa == sb:
            return sb
        # opposite signs: the larger magnitude wins
        diff = self.a * self.a - 15 * self.b * self.b
        if diff == 0:
            return 0
        return sa if diff > 0 else sb

    def __abs__(self):
        return -self if self.sign() < 0 else self

    def __bool__(self):
        return self.sign() != 0

    def _cmp(self, o):
        o = QSqrt15._lift(o)
        if o is NotImplemented:
            return None
        return (self - o).sign()

    def __eq__(self, o):
        c = self._cmp(o)
        return False if c is None else c == 0

    def __lt__(self, o):
        c = self._cmp(o)
        if c is None:
            return NotImplemented
        return c < 0

    def __le__(self, o):
        c = self._cmp(o)
        if c is None:
            return NotImplemented
        return c <= 0

    def __gt__(self, o):
        c = self._cmp(o)
        if c is None:
            return NotImplemented
        return c > 0

    def __ge__(self, o):
        c = self._cmp(o)
        if c is None:
            return NotImplemented
        return c >= 0

    def __hash__(self):
        if self.b == 0:
            return hash(Fraction(int(self.a.numerator), int(self.a.denominator)))
        return hash((self.a, self.b))

    def is_rational(self):
        return self.b == 0

    def __float__(self):
        return float(self.a) + float(self.b) * math.sqrt(15.0)

    def to_mpf(self):
        import mpmath

        a = mpmath.mpf(int(self.a.numerator)) / int(self.a.denominator)
        b = mpmath.mpf(int(self.b.numerator)) / int(self.b.denominator)
        return a + b * mpmath.sqrt(15)

    def digits(self, n=40):
        """Decimal string with n significant digits (for reports)."""
        import mpmath

        with mpmath.workdps(n + 20):
            return mpmath.nstr(self.to_mpf(), n, min_fixed=-5, max_fixed=5, strip_zeros=False)

    def __repr__(self):
        return f"QSqrt15({self.a}, {self.b})"

    def __str__(self):
        return field_to_str(self)


SQRT15 = QSqrt15(0, 1)


def sign(x):
    """Exact sign of int, rational or QSqrt15; float sign otherwise."""
    if isinstance(x, QSqrt15):
        return x.sign()
    return (x > 0) - (x < 0)


def field_to_str(x):
    if isinstance(x, QSqrt15):
        if x.b == 0:
            return str(x.a)
        return f"{x.a} + {x.b}*sqrt15"
    if isinstance(x, _EXACT):
        return str(to_q(x))
    return repr(x)


def field_from_str(s):
    s = s.strip()
    if "sqrt15" in s:
        a, b = s.split(" + ")
        return QSqrt15(mpq(a), mpq(b.replace("*sqrt15", "")))
    return QSqrt15(mpq(s))


# ---------------------------------------------------------------- intervals


def _down(x):
    return math.nextafter(x, -math.inf)


def _up(x):
    return math.nextafter(x, math.inf)


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, x):
        if isinstance(x, float):
            return cls(x, x)
        # exact value: enclose the float conversion
        f = float(x)
        return cls(_down(f), _up(f))

    def contains(self, x):
        if isinstance(x, float):
            return self.lo <= x <= self.hi
        # exact comparison against float endpoints
        q = to_q(x) if not isinstance(x, QSqrt15) else x
        lo_ok = self.lo == -math.inf or q >= to_q(Fraction(self.lo))
        hi_ok = self.hi == math.inf or q <= to_q(Fraction(self.hi))
        return lo_ok and hi_ok

    @property
    def width(self):
        return self.hi - self.lo

    def __add__(self, o):
        return interval_ops(self, _ival(o), "add")

    __radd__ = __add__

    def __sub__(self, o):
        return interval_ops(self, _ival(o), "sub")

    def __rsub__(self, o):
        return interval_ops(_ival(o), self, "sub")

    def __mul__(self, o):
        return interval_ops(self, _ival(o), "mul")

    __rmul__ = __mul__

    def __truediv__(self, o):
        return interval_ops(self, _ival(o), "div")

    def __rtruediv__(self, o):
        return interval_ops(_ival(o), self, "div")

    def __neg__(self):
        return Interval(-self.hi, -self.lo)


def _ival(x):
    return x if isinstance(x, Interval) else Interval.point(x)


def interval_ops(x, y, op):
    """Enclosure of x op y; every endpoint is pushed outward by one ulp."""
    if op == "add":
        lo, hi = x.lo + y.lo, x.hi + y.hi
    elif op == "sub":
        lo, hi = x.lo - y.hi, x.hi - y.lo
    elif op == "mul":
        ps = [x.lo * y.lo, x.lo * y.hi, x.hi * y.lo, x.hi * y.hi]
        ps = [0.0 if math.isnan(p) else p for p in ps]
        lo, hi = min(ps), max(ps)
    elif op == "div":
        if y.lo <= 0.0 <= y.hi:
            raise DivisionByIntervalContainingZero(f"{y} contains 0")
        qs = [x.lo / y.lo, x.lo / y.hi, x.hi / y.lo, x.hi / y.hi]
        lo, hi = min(qs), max(qs)
    else:
        raise ValueError(f"unknown op {op!r}")
    # exact results (e.g. small integers) need no widening
    if _exact_result(x, y, op, lo) and _exact_result(x, y, op, hi):
        return Interval(lo, hi)
    return Interval(_down(lo), _up(hi))


def _exact_result(x, y, op, v):
    if math.isinf(v):
        return True
    fx = [Fraction(x.lo), Fraction(x.hi)]
    fy = [Fraction(y.lo), Fraction(y.hi)]
    fv = Fraction(v)
    if op == "add":
        cand = [a + b for a in fx for b in fy]
    elif op == "sub":
        cand = [a - b for a in fx for b in fy]
    elif op == "mul":
        cand = [a * b for a in fx for b in fy]
    else:
        cand = [a / b for a in fx for b in fy if b != 0]
    return fv in cand


# ---------------------------------------------------------------- polynomials


def _is_zero(c):
    return sign(c) == 0


class ExactPoly:
    """Dense polynomial sum c[i] t**i with exact coefficients."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs=()):
        cs = list(coeffs)
        while cs and _is_zero(cs[-1]):
            cs.pop()
        self.coeffs = tuple(cs)

    @classmethod
    def monomial(cls, k, c=1):
        return cls([0] * k + [c])

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def is_zero(self):
        return not self.coeffs

    def __getitem__(self, i):
        return self.coeffs[i] if 0 <= i < len(self.coeffs) else 0

    def __len__(self):
        return len(self.coeffs)

    def __eq__(self, o):
        if not isinstance(o, ExactPoly):
            o = ExactPoly([o])
        if len(self) != len(o):
            return False
        return all(_is_zero(a - b) for a, b in zip(self.coeffs, o.coeffs))

    def __hash__(self):
        return hash(tuple(str(c) for c in self.coeffs))

    def __add__(self, o):
        if not isinstance(o, ExactPoly):
            o = ExactPoly([o])
        n = max(len(self), len(o))
        return ExactPoly([self[i] + o[i] for i in range(n)])

    __radd__ = __add__

    def __neg__(self):
        return ExactPoly([-c for c in self.coeffs])

    def __sub__(self, o):
        if not isinstance(o, ExactPoly):
            o = ExactPoly([o])
        return self + (-o)

    def __rsub__(self, o):
        return (-self) + o

    def __mul__(self, o):
        if not isinstance(o, ExactPoly):
            return ExactPoly([c * o for c in self.coeffs])
        if self.is_zero() or o.is_zero():
            return ExactPoly()
        out = [0] * (len(self) + len(o) - 1)
        for i, a in enumerate(self.coeffs):
            if _is_zero(a):
                continue
            for j, b in enumerate(o.coeffs):
                out[i + j] = out[i + j] + a * b
        return ExactPoly(out)

    __rmul__ = __mul__

    def __pow__(self, k):
        out = ExactPoly([1])
        for _ in range(k):
            out = out * self
        return out

    def deriv(self):
        return ExactPoly([i * c for i, c in enumerate(self.coeffs)][1:])

    def __call__(self, t):
        acc = 0
        for c in reversed(self.coeffs):
            acc = acc * t + c
        return acc

    def lowest_order(self):
        """Index of the first nonzero coefficient (None for zero)."""
        for i, c in enumerate(self.coeffs):
            if not _is_zero(c):
                return i
        return None

    def shift_down(self, k):
        """Divide by t**k; the k lowest coefficients must vanish."""
        if any(not _is_zero(c) for c in self.coeffs[:k]):
            raise ValueError("polynomial is not divisible by t**%d" % k)
        return ExactPoly(self.coeffs[k:])

    def to_floats(self):
        return [float(c) for c in self.coeffs]

    def __repr__(self):
        return "ExactPoly([" + ", ".join(field_to_str(c) for c in self.coeffs) + "])"


def monotone_split(p):
    """Split p = P_plus - P_minus with both parts having nonnegative coefficients."""
    plus, minus = [], []
    for c in p.coeffs:
        if sign(c) > 0:
            plus.append(c)
            minus.append(0)
        else:
            plus.append(0)
            minus.append(-c)
    return ExactPoly(plus), ExactPoly(minus)


@dataclass
class SignCertificate:
    polynomial: ExactPoly
    interval: tuple
    verdict: str
    margin: object = None
    breakpoints: list = field(default_factory=list)
    depth_reached: int = 0

    def to_json(self):
        return {
            "poly": [field_to_str(c) for c in self.polynomial.coeffs],
            "interval": [field_to_str(self.interval[0]), field_to_str(self.interval[1])],
            "verdict": self.verdict,
            "margin": None if self.margin is None else field_to_str(self.margin),
            "breakpoints": [field_to_str(b) for b in self.breakpoints],
        }


def _bounds(pp, pm, lo, hi):
    # P+ and P- increase on [0, inf): endpoint values bound them on [lo, hi]
    ppl, ppu = pp(lo), pp(hi)
    pml, pmu = pm(lo), pm(hi)
    return ppl - pmu, ppu - pml


def poly_sign_on(p, a, b, max_depth=24):
    """Certify the sign of p on [a, b] (0 <= a <= b) by adaptive bisection.

    Returns a SignCertificate.  ``Positive`` means the monotone lower bound is
    strictly positive on every leaf, and ``margin`` is the smallest such bound.
    ``Negative`` is symmetric with margin the smallest |upper bound|.
    """
    a, b = to_q(a), to_q(b)
    if a < 0 or b < a:
        raise ValueError("need 0 <= a <= b")
    pp, pm = monotone_split(p)

    def attempt(target):
        # target +1: prove p > 0, -1: prove p < 0
        leaves, margin = [], None
        stack = [(a, b, 0)]
        deepest = 0
        while stack:
            lo, hi, depth = stack.pop()
            deepest = max(deepest, depth)
            low, up = _bounds(pp, pm, lo, hi)
            bound = low if target > 0 else -up
            if sign(bound) > 0:
                leaves.append(lo)
                margin = bound if margin is None or bound < margin else margin
                continue
            # a point value of the wrong sign settles the question
            if sign(p(lo)) * target <= 0 or sign(p(hi)) * target <= 0:
                return None, deepest
            if depth >= max_depth:
                return "exhausted", deepest
            mid = (lo + hi) / 2
            stack.append((mid, hi, depth + 1))
            stack.append((lo, mid, depth + 1))
        leaves.sort()
        return (leaves + [b], margin), deepest

    for target, verdict in ((1, "Positive"), (-1, "Negative")):
        res, deepest = attempt(target)
        if res is None:
            continue
        if res == "exhausted":
            return SignCertificate(p, (a, b), "Indeterminate", None, [], deepest)
        breaks, margin = res
        return SignCertificate(p, (a, b), verdict, margin, breaks, deepest)
    return SignCertificate(p, (a, b), "Indeterminate", None, [], 0)
