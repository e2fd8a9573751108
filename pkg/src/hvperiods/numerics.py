"""Multiprecision scalars, polynomials, truncated series and small matrices.

Two scalar kinds flow through the library:

* exact values (``int`` / :class:`fractions.Fraction`), used whenever the
  inputs are rational so that recursions can be checked with zero residual;
* ``gmpy2.mpc`` values at the precision of a :class:`PrecisionContext`.

Arithmetic between the two kinds promotes to ``mpc``.  Every public entry
point that creates floating values does so inside ``ctx.scope()`` so that no
process-wide precision setting is relied upon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterable, Sequence

import gmpy2
from gmpy2 import mpc, mpfr

Rational = Fraction

__all__ = [
    "PrecisionContext",
    "Rational",
    "Poly",
    "TruncatedSeries",
    "NoCandidateError",
    "NonFiniteError",
    "as_rational",
    "is_exact",
    "to_big",
    "poly_eval",
    "series_multiply",
    "series_divide",
    "rational_reconstruct",
]


class NoCandidateError(ValueError):
    """No rational with admissible denominator lies within tolerance."""


class NonFiniteError(ArithmeticError):
    """A NaN or infinity escaped a multiprecision operation."""


@dataclass(frozen=True)
class PrecisionContext:
    """Working precision, series length and target tolerance of a run.

    ``working_digits`` must be at least twice the number of digits implied by
    ``target_tolerance``; this leaves room for the cancellation that occurs
    when transition matrices are chained.
    """

    working_digits: int = 120
    truncation_order: int = 400
    target_tolerance: float = 1e-40

    def __post_init__(self):
        if self.working_digits <= 0 or self.truncation_order <= 0:
            raise ValueError("working_digits and truncation_order must be positive")
        if not self.target_tolerance > 0:
            raise ValueError("target_tolerance must be positive")
        if self.working_digits < 2 * self.tolerance_digits:
            raise ValueError(
                f"working_digits={self.working_digits} is below twice the "
                f"{self.tolerance_digits} digits required by target_tolerance"
            )

    @property
    def tolerance_digits(self) -> int:
        return max(1, math.ceil(-math.log10(self.target_tolerance)))

    @property
    def bits(self) -> int:
        return int(self.working_digits * math.log2(10)) + 24

    def scope(self):
        """Context manager setting the gmpy2 precision for the current thread."""
        return gmpy2.context(gmpy2.get_context(), precision=self.bits,
                             real_prec=self.bits, imag_prec=self.bits)

    @property
    def eps(self) -> mpfr:
        with self.scope():
            return mpfr(10) ** (-self.working_digits)

    @property
    def tol(self) -> mpfr:
        with self.scope():
            return mpfr(10) ** (-self.tolerance_digits)

    def zero_threshold(self) -> mpfr:
        """Relative size below which a computed coefficient counts as zero."""
        with self.scope():
            return mpfr(10) ** (-(3 * self.working_digits) // 4)

    def replace(self, **changes) -> "PrecisionContext":
        return replace(self, **changes)

    def describe(self) -> dict:
        return {
            "working_digits": self.working_digits,
            "truncation_order": self.truncation_order,
            "target_tolerance": f"{self.target_tolerance:.1e}",
        }


# --------------------------------------------------------------------------
# scalars


def is_exact(x) -> bool:
    return isinstance(x, (int, Fraction)) and not isinstance(x, bool)


def as_rational(x) -> Fraction:
    """Parse ``"p/q"``, decimal strings, ints and Fractions exactly."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    raise TypeError(f"cannot read {x!r} as an exact rational")


def to_big(x, ctx: PrecisionContext | None = None) -> mpc:
    """Convert an exact or floating scalar (or numeric string) to ``mpc``.

    Must be called inside ``ctx.scope()`` when ``ctx`` is None.
    """
    if ctx is not None:
        with ctx.scope():
            return to_big(x)
    if isinstance(x, Fraction):
        return mpc(mpfr(x.numerator) / x.denominator)
    if isinstance(x, str):
        s = x.strip().replace(" ", "")
        try:
            return to_big(Fraction(s))
        except ValueError:
            return mpc(complex(s)) if "j" in s else mpc(mpfr(s))
    return mpc(x)


def check_finite(x):
    if isinstance(x, mpc) and not gmpy2.is_finite(x):
        raise NonFiniteError(f"non-finite value {x}")
    return x


def cabs(x) -> mpfr:
    if is_exact(x):
        return mpfr(abs(x))
    return abs(mpc(x))


def is_zero(x, threshold=None) -> bool:
    if is_exact(x):
        return x == 0
    if threshold is None:
        return x == 0
    return abs(x) <= threshold


def _format_real(x: mpfr, digits: int) -> str:
    if x == 0:
        return "0"
    mant, exp, _ = mpfr(x).digits(10, digits + 1)
    sign = ""
    if mant.startswith("-"):
        sign, mant = "-", mant[1:]
    return f"{sign}{mant[0]}.{mant[1:]}e{exp - 1:+d}"


def format_big(x, digits: int = 30) -> str:
    """Decimal rendering of an exact or floating scalar (``a+bj`` when complex)."""
    if is_exact(x):
        return str(x)
    prec = getattr(x, "precision", 53)
    prec = max(prec) if isinstance(prec, tuple) else prec
    with gmpy2.context(gmpy2.get_context(), precision=max(prec, 53)):
        return _format_inexact(x, digits)


def _format_inexact(x, digits: int) -> str:
    if isinstance(x, mpc):
        if x.imag == 0:
            return _format_real(x.real, digits)
        re_s, im_s = _format_real(x.real, digits), _format_real(x.imag, digits)
        return f"{re_s}{'' if im_s.startswith('-') else '+'}{im_s}j"
    return _format_real(mpfr(x), digits)


# --------------------------------------------------------------------------
# polynomials


def _trim(coeffs: Sequence) -> tuple:
    c = list(coeffs)
    while c and c[-1] == 0:
        c.pop()
    return tuple(c)


@dataclass(frozen=True)
class Poly:
    """Dense univariate polynomial, coefficients listed by ascending degree."""

    coeffs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _trim(self.coeffs))

    @classmethod
    def of(cls, *coeffs) -> "Poly":
        return cls(tuple(coeffs))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def exact(self) -> bool:
        return all(is_exact(c) for c in self.coeffs)

    def is_zero(self) -> bool:
        return not self.coeffs

    def __getitem__(self, j):
        return self.coeffs[j] if 0 <= j < len(self.coeffs) else 0

    def __call__(self, x):
        acc = 0
        for c in reversed(self.coeffs):
            acc = acc * x + c
        return acc

    def __add__(self, other: "Poly") -> "Poly":
        n = max(len(self.coeffs), len(other.coeffs))
        return Poly(tuple(self[j] + other[j] for j in range(n)))

    def __sub__(self, other: "Poly") -> "Poly":
        return self + other.scale(-1)

    def __mul__(self, other):
        if not isinstance(other, Poly):
            return self.scale(other)
        if self.is_zero() or other.is_zero():
            return Poly()
        out = [0] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            for j, b in enumerate(other.coeffs):
                out[i + j] += a * b
        return Poly(tuple(out))

    __rmul__ = __mul__

    def scale(self, s) -> "Poly":
        return Poly(tuple(c * s for c in self.coeffs))

    def shift_degree(self, k: int) -> "Poly":
        """Multiply by x**k (k >= 0) or drop the lowest -k coefficients."""
        if k >= 0:
            return Poly((0,) * k + self.coeffs)
        return Poly(self.coeffs[-k:])

    def derivative(self) -> "Poly":
        return Poly(tuple(j * c for j, c in enumerate(self.coeffs) if j > 0))

    def taylor_shift(self, c) -> "Poly":
        """Coefficients of p(c + u) as a polynomial in u."""
        a = list(self.coeffs)
        n = len(a)
        for i in range(n - 1):
            for j in range(n - 2, i - 1, -1):
                a[j] = a[j] + c * a[j + 1]
        return Poly(tuple(a))

    def taylor_coefficients(self, c, count: int) -> list:
        """First ``count`` Taylor coefficients p^(d)(c)/d! (padded with 0)."""
        a = list(self.coeffs)
        out = []
        while a and len(out) < count:
            # synthetic division by (x - c): remainder is the next coefficient
            carry = 0
            quotient = []
            for coef in reversed(a):
                carry = carry * c + coef
                quotient.append(carry)
            out.append(quotient.pop())
            a = quotient[::-1]
        out.extend([0] * (count - len(out)))
        return out

    def numeric(self, ctx: PrecisionContext) -> "Poly":
        with ctx.scope():
            return Poly(tuple(to_big(c) for c in self.coeffs))

    def order_at_zero(self, threshold=None) -> int:
        """Index of the first coefficient not counted as zero (len if none)."""
        for j, c in enumerate(self.coeffs):
            if not is_zero(c, threshold):
                return j
        return len(self.coeffs)

    def max_abs(self) -> mpfr:
        return max((cabs(c) for c in self.coeffs), default=mpfr(0))

    # exact-only helpers -------------------------------------------------
    def divmod_exact(self, other: "Poly") -> tuple["Poly", "Poly"]:
        num = list(self.coeffs)
        den = other.coeffs
        if not den:
            raise ZeroDivisionError("polynomial division by zero")
        q = [Fraction(0)] * max(len(num) - len(den) + 1, 0)
        lead = Fraction(den[-1])
        for k in range(len(num) - len(den), -1, -1):
            coef = Fraction(num[k + len(den) - 1]) / lead
            q[k] = coef
            for j, d in enumerate(den):
                num[k + j] -= coef * d
        return Poly(tuple(q)), Poly(tuple(num[: len(den) - 1]))

    def gcd_exact(self, other: "Poly") -> "Poly":
        a, b = self, other
        while not b.is_zero():
            a, b = b, a.divmod_exact(b)[1]
        if a.is_zero():
            return a
        return a.scale(Fraction(1) / Fraction(a.coeffs[-1]))

    def squarefree_exact(self) -> "Poly":
        g = self.gcd_exact(self.derivative())
        return self.divmod_exact(g)[0] if g.degree > 0 else self

    def to_json(self) -> list[str]:
        return [str(Fraction(c)) for c in self.coeffs]


def poly_eval(p: Poly, x, ctx: PrecisionContext | None = None):
    """Horner evaluation.  Exact in, exact out; otherwise at ``ctx`` precision."""
    if ctx is None or (p.exact and is_exact(x)):
        return p(x)
    with ctx.scope():
        return check_finite(mpc(p(to_big(x))))


# --------------------------------------------------------------------------
# truncated power series


class SeriesMismatchError(ValueError):
    """Series with different expansion points or orders were combined."""


@dataclass(frozen=True)
class TruncatedSeries:
    """Power series sum_n c_n (x - x0)^n known for n < order."""

    coefficients: tuple
    expansion_point: object = 0

    @property
    def order(self) -> int:
        return len(self.coefficients)

    def _check(self, other: "TruncatedSeries"):
        if self.order != other.order or self.expansion_point != other.expansion_point:
            raise SeriesMismatchError(
                f"series at {self.expansion_point} (order {self.order}) and "
                f"{other.expansion_point} (order {other.order}) cannot be combined"
            )

    def __add__(self, other: "TruncatedSeries") -> "TruncatedSeries":
        self._check(other)
        return TruncatedSeries(
            tuple(a + b for a, b in zip(self.coefficients, other.coefficients)),
            self.expansion_point,
        )

    def __mul__(self, other: "TruncatedSeries") -> "TruncatedSeries":
        return series_multiply(self, other)

    def __call__(self, x):
        u = x - self.expansion_point
        acc = 0
        for c in reversed(self.coefficients):
            acc = acc * u + c
        return acc


def series_multiply(a: TruncatedSeries, b: TruncatedSeries) -> TruncatedSeries:
    """Cauchy product truncated to the common order."""
    a._check(b)
    n = a.order
    ca, cb = a.coefficients, b.coefficients
    out = []
    for k in range(n):
        acc = 0
        for i in range(k + 1):
            acc += ca[i] * cb[k - i]
        out.append(acc)
    return TruncatedSeries(tuple(out), a.expansion_point)


def series_divide(a: TruncatedSeries, b: TruncatedSeries) -> TruncatedSeries:
    """a / b; the constant term of b must be nonzero."""
    a._check(b)
    cb = b.coefficients
    if is_zero(cb[0]):
        raise ZeroDivisionError("series division needs an invertible constant term")
    out = []
    for k in range(a.order):
        acc = a.coefficients[k]
        for i in range(1, k + 1):
            acc -= cb[i] * out[k - i]
        if is_exact(acc) and is_exact(cb[0]):
            out.append(Fraction(acc) / cb[0])
        else:
            out.append(acc / cb[0])
    return TruncatedSeries(tuple(out), a.expansion_point)


# --------------------------------------------------------------------------
# rational readout


def _mpfr_to_fraction(x: mpfr) -> Fraction:
    n, d = mpfr(x).as_integer_ratio()
    return Fraction(int(n), int(d))


def rational_reconstruct(x, max_denominator: int, ctx: PrecisionContext,
                         tolerance=None) -> Fraction:
    """Closest rational with denominator <= ``max_denominator`` to ``x``.

    The imaginary part of ``x`` and the distance from the candidate must both
    be within ``tolerance`` (defaults to the context's target tolerance).
    """
    if is_exact(x):
        q = Fraction(x).limit_denominator(max_denominator)
        if q != x:
            raise NoCandidateError(f"{x} has denominator above {max_denominator}")
        return q
    with ctx.scope():
        tol = mpfr(tolerance) if tolerance is not None else ctx.tol
        z = mpc(x)
        if abs(z.imag) > tol:
            raise NoCandidateError(f"imaginary part {z.imag} exceeds tolerance")
        q = _mpfr_to_fraction(z.real).limit_denominator(max_denominator)
        if abs(z.real - mpfr(q.numerator) / q.denominator) > tol:
            raise NoCandidateError(
                f"no rational with denominator <= {max_denominator} within {tol} of {z.real}"
            )
        return q


# --------------------------------------------------------------------------
# small dense matrices (lists of rows)


def identity(n: int, one=1) -> list[list]:
    return [[one if i == j else 0 * one for j in range(n)] for i in range(n)]


def mat_mul(a, b) -> list[list]:
    return [[sum((a[i][k] * b[k][j] for k in range(len(b))), 0 * a[0][0])
             for j in range(len(b[0]))] for i in range(len(a))]


def mat_vec(a, v) -> list:
    return [sum((a[i][k] * v[k] for k in range(len(v))), 0 * v[0]) for i in range(len(a))]


def vec_mat(v, a) -> list:
    return [sum((v[k] * a[k][j] for k in range(len(v))), 0 * v[0]) for j in range(len(a[0]))]


def transpose(a) -> list[list]:
    return [list(r) for r in zip(*a)]


def kron(a, b) -> list[list]:
    return [[a[i][j] * b[k][l] for j in range(len(a[0])) for l in range(len(b[0]))]
            for i in range(len(a)) for k in range(len(b))]


def kron_vec(u, v) -> list:
    return [x * y for x in u for y in v]


def _lu(a):
    n = len(a)
    m = [[Fraction(x) if is_exact(x) else x for x in r] for r in a]
    perm = list(range(n))
    sign = 1
    for col in range(n):
        piv = max(range(col, n), key=lambda r: cabs(m[r][col]))
        if is_zero(m[piv][col]):
            raise ZeroDivisionError("singular matrix")
        if piv != col:
            m[col], m[piv] = m[piv], m[col]
            perm[col], perm[piv] = perm[piv], perm[col]
            sign = -sign
        for r in range(col + 1, n):
            f = m[r][col] / m[col][col]
            m[r][col] = f
            for c in range(col + 1, n):
                m[r][c] -= f * m[col][c]
    return m, perm, sign


def det(a):
    try:
        m, _, sign = _lu(a)
    except ZeroDivisionError:
        return 0
    d = sign
    for i in range(len(a)):
        d = d * m[i][i]
    return d


def mat_inv(a) -> list[list]:
    n = len(a)
    exact = all(is_exact(x) for r in a for x in r)
    if exact:
        a = [[Fraction(x) for x in r] for r in a]
    m, perm, _ = _lu(a)
    inv = [[0] * n for _ in range(n)]
    for j in range(n):
        e = [1 if perm[i] == j else 0 for i in range(n)]
        y = [0] * n
        for i in range(n):
            y[i] = e[i] - sum((m[i][k] * y[k] for k in range(i)), 0)
        x = [0] * n
        for i in range(n - 1, -1, -1):
            x[i] = (y[i] - sum((m[i][k] * x[k] for k in range(i + 1, n)), 0)) / m[i][i]
        for i in range(n):
            inv[i][j] = x[i]
    return inv


def mat_scale(a, s) -> list[list]:
    return [[x * s for x in r] for r in a]


def mat_sub(a, b) -> list[list]:
    return [[x - y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def max_abs_entry(a) -> mpfr:
    return max(cabs(x) for r in a for x in r)


def nearest_integer_matrix(a) -> tuple[list[list[int]], mpfr]:
    """Round entrywise; returns the integer matrix and the max deviation."""
    ints, dev = [], mpfr(0)
    for r in a:
        row = []
        for x in r:
            z = mpc(x)
            k = int(gmpy2.rint(z.real))
            dev = max(dev, abs(z - k))
            row.append(k)
        ints.append(row)
    return ints, dev


def diag(values: Iterable) -> list[list]:
    vals = list(values)
    n = len(vals)
    return [[vals[i] if i == j else 0 for j in range(n)] for i in range(n)]
