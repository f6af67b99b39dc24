from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, strategies as st
from gmpy2 import mpq

from implode_cert.scalar_kernel import (
    SQRT15,
    DivisionByIntervalContainingZero,
    ExactPoly,
    Interval,
    QSqrt15,
    field_from_str,
    field_to_str,
    interval_ops,
    monotone_split,
    poly_sign_on,
    sign,
)

small = st.fractions(min_value=-50, max_value=50, max_denominator=200)
field_el = st.builds(QSqrt15, small, small)
nonzero_field = field_el.filter(lambda x: x.sign() != 0)


# ------------------------------------------------------------------ Q[sqrt15]


def test_sqrt15_squares_to_15():
    assert SQRT15 * SQRT15 == 15
    assert (SQRT15 * SQRT15).is_rational()


@given(field_el, field_el, field_el)
def test_field_axioms(x, y, z):
    assert (x + y) * z == x * z + y * z
    assert (x * y) * z == x * (y * z)
    assert x - x == 0


@given(nonzero_field)
def test_inverse(x):
    assert x * x.inverse() == 1
    assert x / x == 1


@given(field_el)
def test_exact_sign_matches_high_precision(x):
    with mpmath.workdps(60):
        v = x.to_mpf()
        expected = 0 if v == 0 else (1 if v > 0 else -1)
    assert x.sign() == expected
    assert sign(x) == expected


def test_sign_of_near_cancellation():
    # 31**2 = 961 > 960 = 15 * 8**2, so 31 - 8 sqrt15 ~ 0.016 is positive
    assert QSqrt15(4, -1).sign() == 1
    assert QSqrt15(31, -8).sign() == 1
    assert QSqrt15(-31, 8).sign() == -1
    assert QSqrt15(30, -8).sign() == -1
    assert QSqrt15(0, 0).sign() == 0


@given(field_el)
def test_string_roundtrip(x):
    assert field_from_str(field_to_str(x)) == x


def test_division_by_zero():
    with pytest.raises(ZeroDivisionError):
        QSqrt15(1, 1) / QSqrt15(0, 0)


def test_immutable():
    x = QSqrt15(1, 2)
    with pytest.raises(AttributeError):
        x.a = 3


# ------------------------------------------------------------------ intervals


def test_interval_examples():
    s = Interval(1.0, 2.0) + Interval(3.0, 4.0)
    assert (s.lo, s.hi) == (4.0, 6.0)
    p = Interval(-1.0, 1.0) * Interval(-1.0, 1.0)
    assert (p.lo, p.hi) == (-1.0, 1.0)
    with pytest.raises(DivisionByIntervalContainingZero):
        Interval(1.0, 2.0) / Interval(0.0, 1.0)


def test_empty_interval_rejected():
    with pytest.raises(ValueError):
        Interval(2.0, 1.0)


finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)


@st.composite
def interval_with_point(draw):
    a, b = draw(finite), draw(finite)
    X = Interval(min(a, b), max(a, b))
    t = draw(st.fractions(min_value=0, max_value=1, max_denominator=10**6))
    x = Fraction(X.lo) + (Fraction(X.hi) - Fraction(X.lo)) * t
    return X, x


@given(interval_with_point(), interval_with_point(), st.sampled_from(["add", "sub", "mul", "div"]))
def test_interval_enclosure(xa, yb, op):
    (X, x), (Y, y) = xa, yb
    if op == "div" and Y.lo <= 0.0 <= Y.hi:
        with pytest.raises(DivisionByIntervalContainingZero):
            interval_ops(X, Y, op)
        return
    exact = {"add": x + y, "sub": x - y, "mul": x * y, "div": x / y if y else 0}[op]
    R = interval_ops(X, Y, op)
    assert R.contains(mpq(exact.numerator, exact.denominator))


def test_division_by_subnormal_overflows_to_infinite_bound():
    R = interval_ops(Interval(0.0, 1.0), Interval(2.2250738585e-313, 1.0), "div")
    assert R.hi == float("inf")
    assert R.contains(Fraction(10) ** 400) and R.contains(Fraction(0))


# ------------------------------------------------------------------ polynomials


coeff = st.fractions(min_value=-20, max_value=20, max_denominator=30)
polys = st.lists(coeff, min_size=0, max_size=8).map(ExactPoly)


def test_monotone_split_examples():
    plus, minus = monotone_split(ExactPoly([0, -1, 1]))
    assert plus == ExactPoly([0, 0, 1]) and minus == ExactPoly([0, 1])
    plus, minus = monotone_split(ExactPoly([]))
    assert plus.is_zero() and minus.is_zero()
    plus, minus = monotone_split(ExactPoly([-5, 2, 0, 3]))
    assert plus == ExactPoly([0, 2, 0, 3]) and minus == ExactPoly([5])


@given(polys)
def test_monotone_split_reconstructs(p):
    plus, minus = monotone_split(p)
    assert plus - minus == p
    assert all(sign(c) >= 0 for c in plus.coeffs + minus.coeffs)


def test_sign_examples():
    c = poly_sign_on(ExactPoly([1, 1]), 0, 1)
    assert c.verdict == "Positive" and c.margin == 1
    assert poly_sign_on(ExactPoly([-3, 1]), 0, 1).verdict == "Negative"
    c = poly_sign_on(ExactPoly([Fraction(3, 8), -1, 1]), 0, 1)
    assert c.verdict == "Positive"
    assert 0 < c.margin <= Fraction(1, 8)
    assert c.depth_reached > 0


def test_sign_indeterminate_at_root():
    # (t - 1/2)**2 touches zero: neither sign can be certified
    c = poly_sign_on(ExactPoly([Fraction(1, 4), -1, 1]), 0, 1, max_depth=10)
    assert c.verdict == "Indeterminate"


def test_sign_rejects_negative_interval():
    with pytest.raises(ValueError):
        poly_sign_on(ExactPoly([1]), -1, 1)


def test_sign_in_field():
    # (4 - sqrt15) + t, with 4 - sqrt15 ~ 0.127 the minimum at t = 0
    p = ExactPoly([QSqrt15(4, -1), 1])
    c = poly_sign_on(p, 0, 1)
    assert c.verdict == "Positive"
    assert c.margin == QSqrt15(4, -1)


@given(polys, st.fractions(min_value=0, max_value=2, max_denominator=16),
       st.fractions(min_value=0, max_value=2, max_denominator=16))
def test_positive_verdict_is_sound(p, a, b):
    a, b = min(a, b), max(a, b)
    c = poly_sign_on(p, a, b, max_depth=12)
    if c.verdict != "Positive":
        return
    assert c.margin > 0
    for k in range(1001):
        t = a + (b - a) * Fraction(k, 1000)
        assert p(t) >= c.margin > 0


@given(polys, st.fractions(min_value=0, max_value=2, max_denominator=16),
       st.fractions(min_value=0, max_value=2, max_denominator=16))
def test_refinement_only_resolves(p, a, b):
    a, b = min(a, b), max(a, b)
    shallow = poly_sign_on(p, a, b, max_depth=4).verdict
    deep = poly_sign_on(p, a, b, max_depth=14).verdict
    if shallow != "Indeterminate":
        assert deep == shallow


def test_certificate_json():
    c = poly_sign_on(ExactPoly([1, QSqrt15(0, 1)]), 0, Fraction(1, 4))
    js = c.to_json()
    assert js["verdict"] == "Positive"
    assert js["poly"] == ["1", "0 + 1*sqrt15"]
