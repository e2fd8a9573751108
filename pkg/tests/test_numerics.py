from fractions import Fraction

import gmpy2
import pytest
from gmpy2 import mpc, mpfr
from hypothesis import given, settings
from hypothesis import strategies as st

from hvperiods.numerics import (
    NoCandidateError,
    Poly,
    PrecisionContext,
    SeriesMismatchError,
    TruncatedSeries,
    det,
    format_big,
    identity,
    kron,
    mat_inv,
    mat_mul,
    nearest_integer_matrix,
    rational_reconstruct,
    series_divide,
    series_multiply,
    to_big,
)

fractions = st.fractions(min_value=-50, max_value=50, max_denominator=30)
polys = st.lists(fractions, min_size=0, max_size=6).map(lambda c: Poly(tuple(c)))


def series(n):
    return st.lists(fractions, min_size=n, max_size=n).map(lambda c: TruncatedSeries(tuple(c)))


def test_context_rejects_tolerance_above_half_precision():
    with pytest.raises(ValueError):
        PrecisionContext(30, 100, 1e-20)
    with pytest.raises(ValueError):
        PrecisionContext(0, 100, 1e-5)


def test_context_bits_and_tol():
    ctx = PrecisionContext(60, 50, 1e-25)
    assert ctx.tolerance_digits == 25
    assert ctx.bits >= 60 * 3.32
    with ctx.scope():
        assert gmpy2.get_context().precision == ctx.bits


@given(polys, polys, polys)
def test_poly_ring_axioms(a, b, c):
    assert (a + b) * c == a * c + b * c
    assert (a * b) * c == a * (b * c)
    assert a * b == b * a


@given(polys, fractions)
def test_poly_taylor_shift_evaluates_consistently(p, c):
    q = p.taylor_shift(c)
    for x in (Fraction(0), Fraction(1, 3), Fraction(-2)):
        assert q(x) == p(x + c)


@given(polys, polys)
def test_poly_divmod(a, b):
    if b.is_zero():
        return
    q, r = a.divmod_exact(b)
    assert q * b + r == a
    assert r.is_zero() or r.degree < b.degree


def test_poly_derivative_and_degree():
    p = Poly.of(1, 2, 3)
    assert p.derivative() == Poly.of(2, 6)
    assert p.degree == 2
    assert Poly.of(0, 0).is_zero()


@given(series(6), series(6), series(6))
def test_series_ring_axioms(a, b, c):
    assert series_multiply(a, b) == series_multiply(b, a)
    assert series_multiply(series_multiply(a, b), c) == series_multiply(a, series_multiply(b, c))
    assert series_multiply(a + b, c) == series_multiply(a, c) + series_multiply(b, c)


@given(series(6), series(6))
def test_series_division_inverts_multiplication(a, b):
    if b.coefficients[0] == 0:
        return
    assert series_multiply(series_divide(a, b), b) == a


def test_series_mismatch():
    a = TruncatedSeries((1, 2))
    with pytest.raises(SeriesMismatchError):
        a + TruncatedSeries((1, 2, 3))
    with pytest.raises(SeriesMismatchError):
        a + TruncatedSeries((1, 2), expansion_point=1)
    with pytest.raises(ZeroDivisionError):
        series_divide(a, TruncatedSeries((0, 1)))


def test_geometric_series():
    one_minus_x = TruncatedSeries((1, -1, 0, 0, 0))
    one = TruncatedSeries((1, 0, 0, 0, 0))
    assert series_divide(one, one_minus_x).coefficients == (1, 1, 1, 1, 1)


def test_rational_reconstruct():
    ctx = PrecisionContext(50, 10, 1e-20)
    with ctx.scope():
        x = mpfr(-5) / 2 + mpfr(10) ** -40
        assert rational_reconstruct(x, 4, ctx) == Fraction(-5, 2)
        assert rational_reconstruct(mpc(mpfr(1) / 3, 0), 4, ctx) == Fraction(1, 3)
        with pytest.raises(NoCandidateError):
            rational_reconstruct(mpfr(1) / 7, 4, ctx)
        with pytest.raises(NoCandidateError):
            rational_reconstruct(mpc(1, mpfr(10) ** -5), 4, ctx)
        with pytest.raises(NoCandidateError):
            rational_reconstruct(gmpy2.const_pi(), 1000, ctx)
    assert rational_reconstruct(Fraction(3, 4), 4, ctx) == Fraction(3, 4)


int_mats = st.lists(st.lists(st.integers(-9, 9), min_size=2, max_size=2), min_size=2, max_size=2)


@given(int_mats, int_mats)
def test_det_multiplicative_and_kron(a, b):
    assert det(mat_mul(a, b)) == det(a) * det(b)
    assert det(kron(a, b)) == det(a) ** 2 * det(b) ** 2


@given(int_mats)
def test_inverse(a):
    if det(a) == 0:
        with pytest.raises(ZeroDivisionError):
            mat_inv(a)
        return
    assert mat_mul(a, mat_inv([[Fraction(x) for x in r] for r in a])) == identity(2)


def test_nearest_integer_matrix():
    ctx = PrecisionContext(40, 10, 1e-15)
    with ctx.scope():
        m = [[mpc(1) + mpfr(10) ** -30, mpc(-2)], [mpc(0, mpfr(10) ** -25), mpc(3)]]
        ints, dev = nearest_integer_matrix(m)
    assert ints == [[1, -2], [0, 3]]
    assert dev < 1e-24


def test_format_big_keeps_working_precision():
    ctx = PrecisionContext(80, 10, 1e-30)
    with ctx.scope():
        x = to_big(Fraction(1, 3))
    assert format_big(x, 60) == "3." + "3" * 60 + "e-1"
    assert format_big(Fraction(2, 3)) == "2/3"
    with ctx.scope():
        z = mpc(1, -mpfr(1) / 4)
    assert format_big(z, 5).endswith("j")


@settings(max_examples=30)
@given(st.integers(-10**6, 10**6), st.integers(1, 10**6))
def test_to_big_is_correctly_rounded(n, d):
    ctx = PrecisionContext(40, 10, 1e-15)
    with ctx.scope():
        z = to_big(Fraction(n, d))
        assert abs(z * d - n) <= abs(n) * mpfr(10) ** -38 + mpfr(10) ** -38
