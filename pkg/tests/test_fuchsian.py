from fractions import Fraction

import gmpy2
import pytest
from gmpy2 import mpc, mpfr
from hypothesis import given, settings
from hypothesis import strategies as st

from hvperiods.fuchsian import (
    INFINITY,
    FuchsianOperator,
    IrregularPointError,
    OperatorError,
    OutsideDiskError,
    TruncationError,
    apply_operator,
    classify_point,
    evaluate_basis,
    formal_monodromy,
    frobenius_basis,
    indicial_exponents,
    singular_locations,
)
from hvperiods.hv_elliptic import elliptic_operator, f0_coefficients
from hvperiods.numerics import Poly, PrecisionContext, format_big, to_big

PHI = Fraction(1, 64)


@pytest.fixture(scope="module")
def op():
    return elliptic_operator(PHI)


def test_exponents_at_each_point(op, low):
    assert singular_locations(op, low) == (0, Fraction(-1, 20), Fraction(1, 100), PHI, Fraction(1, 36))
    assert indicial_exponents(op, 0, low) == [0, 0]
    assert indicial_exponents(op, Fraction(-1, 20), low) == [0, 2]
    assert indicial_exponents(op, INFINITY, low) == [1, 1]
    for s in (Fraction(1, 100), PHI, Fraction(1, 36)):
        assert indicial_exponents(op, s, low) == [0, 0]


def test_apparent_point_classification(op, low):
    assert classify_point(op, Fraction(-1, 20), low).apparent
    assert not classify_point(op, PHI, low).apparent
    assert not classify_point(op, 0, low).apparent


def test_exact_basis_structure(op, low):
    b = frobenius_basis(op, 0, low.replace(truncation_order=6), exact=True)
    f0, f1 = b.solutions
    assert f0.coefficients[0][:4] == (1, 66, 4614, 339348)
    assert list(f0.coefficients[0]) == f0_coefficients(PHI, 6)
    assert f1.log_degree == 1
    assert f1.coefficients[1] == f0.coefficients[0]
    assert f1.coefficients[0][:3] == (0, 88, 9056)


@pytest.mark.parametrize("phi", [Fraction(1), PHI, Fraction(3, 7)])
def test_exact_annihilation(phi, low):
    op = elliptic_operator(phi)
    b = frobenius_basis(op, 0, low.replace(truncation_order=50), exact=True)
    for s in b.solutions:
        assert apply_operator(op, s).is_zero()


def test_numeric_residual(op, low):
    b = frobenius_basis(op, 0, low)
    with low.scope():
        for s in b.solutions:
            img = apply_operator(op, s, low)
            scale = max(abs(c) for col in s.coefficients for c in col[:60])
            assert max(abs(c) for col in img.coefficients for c in col[:60]) < low.eps * scale * 1e6


def test_apply_operator_to_constant_is_not_zero(op, low):
    # L(1) = R2 + R1 + R0: the constant terms cancel, the higher ones do not.
    from hvperiods.fuchsian import LogSeries

    one = LogSeries(Fraction(0), (tuple([Fraction(1)] + [Fraction(0)] * 9),))
    img = apply_operator(op, one)
    assert img.coefficients[0][0] == 0
    assert not img.is_zero()


def test_evaluate_matches_binomial_sum(op, low):
    b = frobenius_basis(op, 0, low)
    z = Fraction(1, 1000)
    with low.scope():
        vals = evaluate_basis(b, to_big(z))
        direct = sum(to_big(c) * to_big(z) ** n for n, c in enumerate(f0_coefficients(PHI, 120)))
        assert abs(vals[0][0] - direct) < low.eps * 100
    # frozen from an independent 60-digit run
    assert format_big(vals[0][0], 20) == "1.07098168391169951507e+0"
    assert format_big(vals[1][0], 20) == "-7.30015521136779951869e+0"


def test_formal_monodromy_of_log_ladder(op, low):
    b = frobenius_basis(op, 0, low)
    m = formal_monodromy(b)
    with low.scope():
        tpi = 2 * gmpy2.const_pi()
        assert abs(m[0][0] - 1) < low.eps and abs(m[0][1]) < low.eps
        assert abs(m[1][0] - mpc(0, tpi)) < low.eps and abs(m[1][1] - 1) < low.eps


def test_formal_monodromy_matches_numeric_continuation(op, mid):
    b = frobenius_basis(op, Fraction(1, 100), mid)
    with mid.scope():
        z = to_big(Fraction(1, 100)) + mpc(mpfr("0.001"), mpfr("0.0005"))
        w0 = evaluate_basis(b, z, branch=0, derivatives=1)
        a = gmpy2.atan2(mpfr("0.0005"), mpfr("0.001"))
        w1 = evaluate_basis(b, z, arg=a + 2 * gmpy2.const_pi(), derivatives=1)
        m = formal_monodromy(b)
        for i in range(2):
            for j in range(2):
                moved = sum(m[i][k] * w0[k][j] for k in range(2))
                assert abs(moved - w1[i][j]) < mid.tol


def test_fractional_exponents():
    ctx = PrecisionContext(40, 30, 1e-15)
    op = FuchsianOperator(2, Fraction(0), (Poly.of(Fraction(-1, 9)), Poly.of(0), Poly.of(1, -1)))
    assert sorted(indicial_exponents(op, 0, ctx)) == [Fraction(-1, 3), Fraction(1, 3)]
    b = frobenius_basis(op, 0, ctx)
    m = formal_monodromy(b)
    with ctx.scope():
        eig = sorted((m[i][i] for i in range(2)), key=lambda z: z.imag)
        w = gmpy2.exp(mpc(0, 2 * gmpy2.const_pi() / 3))
        assert abs(eig[1] - w) < ctx.tol and abs(eig[0] - w.conjugate()) < ctx.tol
        assert abs(m[0][1]) < ctx.tol and abs(m[1][0]) < ctx.tol


def test_outside_disk_and_irregular(op, low):
    b = frobenius_basis(op, 0, low)
    with pytest.raises(OutsideDiskError):
        evaluate_basis(b, to_big(Fraction(1, 50), low))
    irregular = FuchsianOperator(1, Fraction(0), (Poly.of(1), Poly.of(0, 1)))
    with pytest.raises(IrregularPointError):
        indicial_exponents(irregular, 0, low)
    with pytest.raises(IrregularPointError):
        frobenius_basis(irregular, 0, low)


def test_operator_json_round_trip(op):
    assert FuchsianOperator.from_json(op.to_json()) == op
    with pytest.raises(OperatorError):
        FuchsianOperator.from_json({"order": 2})
    with pytest.raises(OperatorError):
        FuchsianOperator(2, 0, (Poly.of(1), Poly.of(1)))
    with pytest.raises(OperatorError):
        FuchsianOperator(1, 0, (Poly.of(1), Poly()))


def test_truncation_is_reported_not_ignored(op):
    ctx = PrecisionContext(40, 20, 1e-15)
    b = frobenius_basis(op, 0, ctx)
    with ctx.scope():
        z = to_big(Fraction(1, 200)) * mpc(mpfr("0.99"), mpfr("0.01"))
        with pytest.raises(TruncationError):
            evaluate_basis(b, z)


def test_conjugation_shifts_exponents(op, low):
    assert indicial_exponents(op.conjugate_by_power(1), 0, low) == [1, 1]


@settings(max_examples=15, deadline=None)
@given(st.fractions(min_value=Fraction(-1, 250), max_value=Fraction(1, 250), max_denominator=5000))
def test_basis_satisfies_recurrence_pointwise(op, low, x):
    # The numeric sum agrees with the exact binomial formula anywhere inside half the radius.
    if x == 0:
        return
    b = frobenius_basis(op, 0, low)
    with low.scope():
        vals = evaluate_basis(b, to_big(x))
        direct = sum(to_big(c) * to_big(x) ** n for n, c in enumerate(f0_coefficients(PHI, 150)))
        assert abs(vals[0][0] - direct) < low.eps * 1000
