"""Fuchsian operators in theta-form and their local Frobenius bases.

An operator is stored as ``sum_i p_i(x) (theta + s)^i`` with ``theta = x d/dx``.
Local analysis at a point ``c`` rewrites it as ``sum_k b_k(u) theta_u^k`` in
the local coordinate ``u = x - c`` (or ``u = 1/x`` at infinity).  Writing
``Q_j(t) = sum_k b_k[j] t^k``, a formal solution
``sum_n sum_k c[n][k] u^(rho+n) log(u)^k / k!`` satisfies

    Q_0(rho + n + N) c[n] = - sum_{j>=1} Q_j(rho + n - j + N) c[n-j]

where ``N`` is the nilpotent shift acting on log-coefficient vectors.  At
indices where ``rho + n`` is an indicial root of multiplicity ``mu`` the
first ``mu`` entries of ``c[n]`` are free; each free entry spawns one basis
element.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import gmpy2
import mpmath
from gmpy2 import mpc, mpfr

from .numerics import (
    Poly,
    PrecisionContext,
    as_rational,
    cabs,
    is_exact,
    is_zero,
    to_big,
)

INFINITY = "infinity"


class OperatorError(ValueError):
    """Malformed operator data."""


class IrregularPointError(ValueError):
    """The point is not a regular singular point of the operator."""


class NonIntegerExponentError(ValueError):
    """Indicial roots with non-integer differences (unsupported)."""


class TruncationError(ArithmeticError):
    """Series truncation cannot meet the requested tolerance."""


class OutsideDiskError(ValueError):
    """Evaluation requested outside the certified convergence disk."""


# --------------------------------------------------------------------------
# combinatorial tables


@lru_cache(maxsize=None)
def _stirling2(n: int, k: int) -> int:
    if n == k:
        return 1
    if k == 0 or k > n:
        return 0
    return k * _stirling2(n - 1, k) + _stirling2(n - 1, k - 1)


@lru_cache(maxsize=None)
def _stirling1_signed(n: int, k: int) -> int:
    if n == k:
        return 1
    if k == 0 or k > n:
        return 0
    return _stirling1_signed(n - 1, k - 1) - (n - 1) * _stirling1_signed(n - 1, k)


# --------------------------------------------------------------------------
# operators


@dataclass(frozen=True)
class FuchsianOperator:
    """``sum_i coeffs[i](x) * (theta + shift)^i``."""

    order: int
    shift: Fraction
    coeffs: tuple
    variable: str = "lambda"
    name: str = ""

    def __post_init__(self):
        if len(self.coeffs) != self.order + 1:
            raise OperatorError(
                f"expected {self.order + 1} coefficient polynomials, got {len(self.coeffs)}"
            )
        if self.coeffs[-1].is_zero():
            raise OperatorError("leading coefficient polynomial is identically zero")
        object.__setattr__(self, "shift", Fraction(self.shift) if is_exact(self.shift) else self.shift)

    @property
    def exact(self) -> bool:
        return all(p.exact for p in self.coeffs) and is_exact(self.shift)

    @property
    def leading(self) -> Poly:
        return self.coeffs[-1]

    def numeric(self, ctx: PrecisionContext) -> "FuchsianOperator":
        if not self.exact:
            return self
        return FuchsianOperator(self.order, self.shift,
                                tuple(p.numeric(ctx) for p in self.coeffs),
                                self.variable, self.name)

    def conjugate_by_power(self, k) -> "FuchsianOperator":
        """Operator annihilating ``x^k * y`` whenever this one annihilates ``y``."""
        return FuchsianOperator(self.order, self.shift - k, self.coeffs,
                                self.variable, self.name)

    def theta_form(self) -> tuple:
        """Coefficients ``a_k`` of ``theta^k`` (shift expanded binomially)."""
        s = self.shift
        out = []
        for k in range(self.order + 1):
            acc = Poly()
            for i in range(k, self.order + 1):
                acc = acc + self.coeffs[i].scale(math.comb(i, k) * s ** (i - k))
            out.append(acc)
        return tuple(out)

    def key(self) -> str:
        payload = json.dumps([str(self.shift), [[str(c) for c in p.coeffs] for p in self.coeffs]])
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    # JSON --------------------------------------------------------------
    def to_json(self) -> dict:
        if not self.exact:
            raise OperatorError("only exact operators can be exported")
        return {
            "name": self.name,
            "order": self.order,
            "shift": str(self.shift),
            "variable": self.variable,
            "coefficients": [p.to_json() for p in self.coeffs],
        }

    @classmethod
    def from_json(cls, data: dict) -> "FuchsianOperator":
        try:
            order = int(data["order"])
            coeffs = tuple(Poly(tuple(as_rational(c) for c in row)) for row in data["coefficients"])
            return cls(order, as_rational(data.get("shift", "0")), coeffs,
                       data.get("variable", "x"), data.get("name", ""))
        except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
            raise OperatorError(f"malformed operator data: {exc}") from exc


@dataclass(frozen=True)
class LocalOperator:
    """Theta_u-form of an operator at a point; ``b[k]`` multiplies ``theta_u^k``."""

    point: object
    b: tuple

    @property
    def order(self) -> int:
        return len(self.b) - 1

    @property
    def length(self) -> int:
        return max(len(p.coeffs) for p in self.b)

    def q(self, j: int) -> Poly:
        return Poly(tuple(p[j] for p in self.b))


def _threshold(polys, ctx):
    if ctx is None or all(p.exact for p in polys):
        return None
    scale = max(p.max_abs() for p in polys)
    return ctx.zero_threshold() * scale


def local_form(op: FuchsianOperator, point, ctx: PrecisionContext | None = None) -> LocalOperator:
    """Rewrite ``op`` in theta-form at ``point`` (finite or ``INFINITY``)."""
    r = op.order
    a = op.theta_form()
    if point == INFINITY:
        deg = max(p.degree for p in a)
        b = [Poly(tuple(p[deg - j] for j in range(deg + 1))).scale((-1) ** k)
             for k, p in enumerate(a)]
    elif is_zero(point):
        b = list(a)
    else:
        # theta^k = sum_m S2(k, m) x^m D^m, then u^m D^m = falling factorial of theta_u
        big_a = []
        for m in range(r + 1):
            acc = Poly()
            for k in range(m, r + 1):
                acc = acc + a[k].scale(_stirling2(k, m))
            big_a.append(acc.shift_degree(m).taylor_shift(point))
        b = []
        for k in range(r + 1):
            acc = Poly()
            for m in range(k, r + 1):
                acc = acc + big_a[m].shift_degree(r - m).scale(_stirling1_signed(m, k))
            b.append(acc)
    thr = _threshold(b, ctx)
    v = min(p.order_at_zero(thr) for p in b)
    b = [p.shift_degree(-v) for p in b]
    if thr is not None:
        # snap the constant terms that were declared zero
        b = [Poly(tuple(0 if j == 0 and is_zero(c, thr) else c for j, c in enumerate(p.coeffs)))
             for p in b]
    if is_zero(b[r][0], thr):
        raise IrregularPointError(f"{point} is not a regular singular point")
    return LocalOperator(point, tuple(b))


# --------------------------------------------------------------------------
# roots


def _to_mp(ctxmp, x):
    if is_exact(x):
        x = Fraction(x)
        return ctxmp.mpf(x.numerator) / x.denominator
    z = mpc(x)
    re_n, re_d = mpfr(z.real).as_integer_ratio()
    im_n, im_d = mpfr(z.imag).as_integer_ratio()
    return ctxmp.mpc(ctxmp.mpf(int(re_n)) / int(re_d), ctxmp.mpf(int(im_n)) / int(im_d))


def _from_mp(z) -> mpc:
    return mpc(_mpf_to_mpfr(z.real), _mpf_to_mpfr(z.imag))


def _mpf_to_mpfr(x) -> mpfr:
    sign, man, exp, _ = x._mpf_
    val = mpfr(int(man)) * mpfr(2) ** int(exp) if man else mpfr(0)
    return -val if sign else val


def _mpfr_fraction(x) -> Fraction:
    n, d = mpfr(x).as_integer_ratio()
    return Fraction(int(n), int(d))


def poly_roots(p: Poly, ctx: PrecisionContext) -> list:
    """Roots of ``p`` without multiplicity.

    Exact polynomials are made squarefree first and rational roots are
    returned as Fractions; everything else comes back as ``mpc``.
    """
    if p.degree < 1:
        return []
    exact = p.exact
    if exact:
        p = p.squarefree_exact()
    ctxmp = mpmath.MPContext()
    ctxmp.dps = ctx.working_digits + 20
    coeffs = [_to_mp(ctxmp, c) for c in reversed(p.coeffs)]
    try:
        raw = ctxmp.polyroots(coeffs, maxsteps=400, extraprec=4 * ctx.bits)
    except ctxmp.NoConvergence:
        # clustered roots converge linearly; give the iteration more room
        raw = ctxmp.polyroots(coeffs, maxsteps=4000, extraprec=8 * ctx.bits, error=False)
    out = []
    with ctx.scope():
        for z in raw:
            if exact:
                zr = _from_mp(ctxmp.mpc(z))
                q = _mpfr_fraction(zr.real).limit_denominator(10**9)
                if abs(zr.imag) < mpfr(10) ** (-ctx.working_digits // 2) and p(q) == 0:
                    out.append(q)
                    continue
            z = _from_mp(ctxmp.mpc(z))
            dp = p.derivative()
            for _ in range(4):  # Newton polish at full precision
                d = dp(z)
                if d == 0:
                    break
                z = z - p(z) / d
            out.append(z)
    return out


def _rational_candidates(roots, den_bound=120):
    cands = []
    for z in roots:
        if is_exact(z):
            cands.append(Fraction(z))
            continue
        z = mpc(z)
        q = _mpfr_fraction(z.real).limit_denominator(den_bound)
        cands.append(q)
    return cands


def indicial_polynomial(loc: LocalOperator) -> Poly:
    return loc.q(0)


def indicial_exponents(op: FuchsianOperator, point, ctx: PrecisionContext) -> list:
    """Indicial roots at ``point`` with multiplicity, ascending."""
    loc = local_form(op, point, ctx)
    return _exponents_of(loc, ctx)


def _exponents_of(loc: LocalOperator, ctx: PrecisionContext) -> list:
    q0 = indicial_polynomial(loc)
    r = loc.order
    if q0.degree != r:
        raise IrregularPointError(f"indicial polynomial at {loc.point} has degree {q0.degree} < {r}")
    found: dict[Fraction, int] = {}
    if q0.exact:
        rest = q0
        for cand in set(_rational_candidates(poly_roots(q0, ctx))):
            m = 0
            lin = Poly.of(-cand, 1)
            while rest.degree >= 1:
                quo, rem = rest.divmod_exact(lin)
                if not rem.is_zero():
                    break
                rest, m = quo, m + 1
            if m:
                found[cand] = m
    else:
        with ctx.scope():
            scale = q0.max_abs()
            thr = mpfr(10) ** (-(ctx.working_digits // (2 * r))) * scale
            for cand in set(_rational_candidates(poly_roots(q0, ctx))):
                taylor = q0.taylor_coefficients(cand, r + 1)
                m = 0
                while m < r and cabs(taylor[m]) <= thr:
                    m += 1
                if m:
                    found[cand] = m
    total = sum(found.values())
    if total != r:
        raise NonIntegerExponentError(
            f"indicial roots at {loc.point} are not all rational (found {found})"
        )
    out = []
    for q in sorted(found):
        out.extend([q] * found[q])
    return out


@lru_cache(maxsize=256)
def singular_locations(op: FuchsianOperator, ctx: PrecisionContext) -> tuple:
    """Finite singular points: zeros of the leading coefficient, plus 0."""
    roots = poly_roots(op.leading, ctx)
    with ctx.scope():
        pts = [Fraction(0)]
        for z in roots:
            if is_exact(z):
                if z != 0:
                    pts.append(z)
            elif abs(z) > mpfr(10) ** (-ctx.working_digits // 2):
                pts.append(z)
    return tuple(pts)


def distance(a, b) -> mpfr:
    return cabs(to_big(a) - to_big(b))


# --------------------------------------------------------------------------
# log series and Frobenius bases


@dataclass(frozen=True)
class LogSeries:
    """``sum_n sum_k coefficients[k][n] u^(exponent+n) log(u)^k / k!``."""

    exponent: Fraction
    coefficients: tuple
    expansion_point: object = 0

    @property
    def log_degree(self) -> int:
        return len(self.coefficients) - 1

    @property
    def order(self) -> int:
        return len(self.coefficients[0]) if self.coefficients else 0

    def series(self, k: int) -> tuple:
        return self.coefficients[k] if k < len(self.coefficients) else (0,) * self.order

    def power_log_form(self) -> list:
        """Series ``G_k`` with the solution written as ``u^rho sum_k G_k log^k``."""
        return [tuple(c / math.factorial(k) if not is_exact(c) else Fraction(c, math.factorial(k))
                      for c in col) for k, col in enumerate(self.coefficients)]

    def derivative(self) -> "LogSeries":
        rho = self.exponent
        cols = self.coefficients
        kk = len(cols)
        new = []
        for k in range(kk):
            col = []
            for n in range(self.order):
                v = (rho + n) * cols[k][n]
                if k + 1 < kk:
                    v = v + cols[k + 1][n]
                col.append(v)
            new.append(tuple(col))
        return LogSeries(rho - 1, tuple(new), self.expansion_point)

    def is_zero(self) -> bool:
        return all(c == 0 for col in self.coefficients for c in col)


@dataclass(frozen=True)
class SingularPoint:
    location: object
    exponents: tuple
    apparent: bool


@dataclass(eq=False)
class FrobeniusBasis:
    """Canonical local solution basis at ``base_point``.

    Each element has coefficient 1 at its own distinguished monomial
    ``u^(rho+n) log^k/k!`` and 0 at the distinguished monomials of the others.
    At a point with a single exponent of full multiplicity this is the
    log-ladder ``y_k`` with ``k! y_k = sum_j C(k,j) F_j log^(k-j)`` and
    ``F_j(0) = delta_{j0}``.
    """

    op: FuchsianOperator
    base_point: object
    solutions: tuple
    leading: tuple          # (exponent, n, k) per solution
    exponents: tuple
    radius: object          # distance to the nearest other singular point
    ctx: PrecisionContext
    exact: bool
    log_residual: object = 0  # largest resonance inconsistency discarded
    _derivs: dict = field(default_factory=dict, repr=False)

    @property
    def dimension(self) -> int:
        return len(self.solutions)

    @property
    def has_logs(self) -> bool:
        return any(s.log_degree > 0 for s in self.solutions)

    @property
    def single_valued(self) -> bool:
        return not self.has_logs and all(Fraction(e).denominator == 1 for e in self.exponents)

    def derivative_series(self, order: int) -> tuple:
        if order == 0:
            return self.solutions
        if order not in self._derivs:
            self._derivs[order] = tuple(s.derivative() for s in self.derivative_series(order - 1))
        return self._derivs[order]

    def center(self) -> mpc:
        return to_big(self.base_point, self.ctx)


def _shifted_apply(q: list, v: Sequence, kk: int) -> list:
    out = []
    for k in range(kk):
        acc = 0
        for d in range(kk - k):
            if q[d] != 0 and v[k + d] != 0:
                acc = acc + q[d] * v[k + d]
        out.append(acc)
    return out


def _solve_ladder(loc: LocalOperator, rho0, resonance: dict, free: dict, kk: int,
                  nterms: int, thr) -> tuple[list, object]:
    """Coefficient vectors c[n] for one choice of free parameters."""
    big_j = loc.length - 1
    qs = [loc.q(j) for j in range(big_j + 1)]
    coeffs = []
    worst = 0
    for n in range(nterms):
        nu = rho0 + n
        rhs = [0] * kk
        for j in range(1, min(n, big_j) + 1):
            if qs[j].is_zero():
                continue
            prev = coeffs[n - j]
            if all(x == 0 for x in prev):
                continue
            tq = qs[j].taylor_coefficients(nu - j, kk)
            contrib = _shifted_apply(tq, prev, kk)
            rhs = [x - y for x, y in zip(rhs, contrib)]
        mu = resonance.get(n, 0)
        t0 = qs[0].taylor_coefficients(nu, kk + mu)
        new = [0] * kk
        for k in range(mu):
            new[k] = free.get((n, k), 0)
        # rows k >= kk - mu must be consistent (they carry no unknowns)
        for k in range(kk - mu, kk):
            if rhs[k] != 0:
                mag = cabs(rhs[k])
                if thr is None or mag > thr:
                    worst = max(worst, mag) if not is_exact(rhs[k]) else float("inf")
                elif mag > worst:
                    worst = mag
        lead = t0[mu]
        for k in range(kk - mu - 1, -1, -1):
            acc = rhs[k]
            for d in range(1, kk - mu - k):
                if t0[d + mu] != 0:
                    acc = acc - t0[d + mu] * new[k + d + mu]
            if is_exact(acc) and is_exact(lead):
                new[k + mu] = Fraction(acc) / lead
            else:
                new[k + mu] = acc / lead
        coeffs.append(new)
    return coeffs, worst


def _classes(exponents: list) -> list[tuple[Fraction, dict]]:
    groups: dict[Fraction, list] = {}
    for e in exponents:
        groups.setdefault(e - math.floor(e), []).append(e)
    out = []
    for frac in sorted(groups):
        es = sorted(groups[frac])
        rho0 = es[0]
        res: dict[int, int] = {}
        for e in es:
            n = int(e - rho0)
            res[n] = res.get(n, 0) + 1
        out.append((rho0, res))
    return out


def frobenius_basis(op: FuchsianOperator, point, ctx: PrecisionContext, *,
                    exact: bool = False, nterms: int | None = None,
                    radius=None) -> FrobeniusBasis:
    """Canonical Frobenius basis of ``op`` at a finite ``point``.

    With ``exact=True`` the operator and point must be rational and all
    coefficients are Fractions; otherwise everything is computed in ``mpc``.
    """
    if point == INFINITY:
        raise ValueError("bases at infinity are not supported; use indicial_exponents")
    nterms = nterms or ctx.truncation_order
    if exact and not (op.exact and is_exact(point)):
        raise ValueError("exact mode needs a rational operator and point")
    with ctx.scope():
        if exact:
            loc = local_form(op, Fraction(point))
            exps = _exponents_of(loc, ctx)
        else:
            loc = local_form(op.numeric(ctx), to_big(point), ctx)
            if op.exact and is_exact(point):
                # exact indicial roots: numeric root finding is slow on high multiplicity
                exps = _exponents_of(local_form(op, Fraction(point)), ctx)
            else:
                exps = _exponents_of(loc, ctx)
        if radius is None:
            radius = _radius(op, point, ctx)
        thr = None
        if not exact:
            scale = max(p.max_abs() for p in loc.b)
            thr = ctx.zero_threshold() * scale
        solutions, leading = [], []
        worst = 0
        for rho0, res in _classes(exps):
            if max(res) >= nterms:
                raise TruncationError(
                    f"truncation order {nterms} cannot resolve exponent difference {max(res)}"
                )
            full_k = sum(res.values())
            params = [(n, k) for n in sorted(res) for k in range(res[n])]
            # try without logs when all multiplicities are 1 (ordinary or apparent points)
            kk = 1 if all(m == 1 for m in res.values()) else full_k
            for n, k in params:
                coeffs, bad = _solve_ladder(loc, rho0, res, {(n, k): 1}, kk, nterms, thr)
                if kk < full_k and bad != 0 and (thr is None or bad > thr):
                    kk = full_k
                    coeffs, bad = _solve_ladder(loc, rho0, res, {(n, k): 1}, kk, nterms, thr)
                worst = max(worst, bad) if bad != float("inf") else worst
                cols = [tuple(c[i] for c in coeffs) for i in range(kk)]
                while len(cols) > 1 and all(
                        is_zero(x, None if thr is None else thr) for x in cols[-1]):
                    cols.pop()
                solutions.append(LogSeries(rho0, tuple(cols), point))
                leading.append((rho0 + n, n, k))
        return FrobeniusBasis(op, point, tuple(solutions), tuple(leading), tuple(exps),
                              radius, ctx, exact, worst)


def _radius(op: FuchsianOperator, point, ctx: PrecisionContext):
    pts = singular_locations(op, ctx)
    with ctx.scope():
        ds = [distance(point, s) for s in pts]
        ds = [d for d in ds if d > mpfr(10) ** (-ctx.working_digits // 2)]
        return min(ds) if ds else mpfr("inf")


# --------------------------------------------------------------------------
# applying the operator


def apply_operator(op: FuchsianOperator, s: LogSeries, ctx: PrecisionContext | None = None) -> LogSeries:
    """Image of ``s`` under the local theta-form of ``op`` at ``s``'s point.

    At 0 this is ``op`` itself; elsewhere it is ``u^r op`` divided by the
    largest common power of ``u`` of its coefficients.  Coefficients for
    indices below ``s.order`` are exact.
    """
    exact = op.exact and is_exact(s.expansion_point) and all(
        is_exact(c) for col in s.coefficients for c in col)
    if exact:
        return _apply_local(op, s, None)
    if ctx is None:
        raise ValueError("numeric series need a precision context")
    with ctx.scope():
        return _apply_local(op.numeric(ctx), s, ctx)


def _apply_local(op: FuchsianOperator, s: LogSeries, ctx) -> LogSeries:
    exact = ctx is None
    loc = local_form(op, s.expansion_point, None if exact else ctx)
    kk = len(s.coefficients)
    n_total = s.order
    big_j = loc.length - 1
    qs = [loc.q(j) for j in range(big_j + 1)]
    vecs = [[s.coefficients[k][n] for k in range(kk)] for n in range(n_total)]
    out = []
    for m in range(n_total):
        acc = [0] * kk
        for j in range(0, min(m, big_j) + 1):
            tq = qs[j].taylor_coefficients(s.exponent + m - j, kk)
            contrib = _shifted_apply(tq, vecs[m - j], kk)
            acc = [a + b for a, b in zip(acc, contrib)]
        out.append(acc)
    cols = tuple(tuple(out[n][k] for n in range(n_total)) for k in range(kk))
    return LogSeries(s.exponent, cols, s.expansion_point)


# --------------------------------------------------------------------------
# evaluation


def continuous_arg(u: mpc, ref) -> mpfr:
    """Argument of ``u`` chosen in ``(ref - pi, ref + pi]``."""
    a = gmpy2.atan2(u.imag, u.real)
    two_pi = 2 * gmpy2.const_pi()
    lo = mpfr(ref) - gmpy2.const_pi()
    k = gmpy2.floor((a - lo) / two_pi)
    a = a - k * two_pi
    if a <= lo:
        a += two_pi
    return a


def _terms_needed(q, tol, cap):
    if q <= 0:
        return cap
    if q >= 1:
        return cap
    n = int(gmpy2.ceil(gmpy2.log(tol) / gmpy2.log(q))) + 12
    return max(8, min(cap, n))


def evaluate_basis(b: FrobeniusBasis, z, branch=None, derivatives: int = 0,
                   tolerance=None, arg=None, check_disk: bool = True, offset=None) -> list:
    """Values of the basis at ``z`` (rows: solutions; columns: d^j/dz^j).

    ``branch`` is the reference angle of the log branch at ``b.base_point``:
    ``arg(z - base_point)`` is taken in ``(branch - pi, branch + pi]``
    (principal when None).  ``arg`` overrides it with an explicit argument.
    ``offset`` gives ``z - base_point`` directly, avoiding cancellation very
    close to the base point (``z`` is then ignored).
    """
    ctx = b.ctx
    with ctx.scope():
        c = b.center()
        u = to_big(offset) if offset is not None else to_big(z) - c
        absu = abs(u)
        radius = b.radius
        q = absu / radius if gmpy2.is_finite(mpfr(radius)) else mpfr(0)
        if check_disk and q > mpfr("0.5") + ctx.eps:
            raise OutsideDiskError(
                f"|z - {b.base_point}| / radius = {float(q):.3f} exceeds the safety ratio 1/2"
            )
        tol = mpfr(tolerance) if tolerance is not None else ctx.eps
        nmax = _terms_needed(q, tol, b.solutions[0].order)
        if absu == 0:
            if b.has_logs or any(e < 0 for e in b.exponents):
                raise OutsideDiskError("log/negative-exponent solutions are singular at the base point")
            rows = []
            for d in range(derivatives + 1):
                ser = b.derivative_series(d)
                rows.append([s.coefficients[0][int(-s.exponent)] if s.exponent <= 0 and
                             -s.exponent < s.order else 0 for s in ser])
            return [list(r) for r in zip(*rows)]
        if arg is not None:
            theta = mpfr(arg)
        else:
            theta = continuous_arg(u, 0 if branch is None else branch)
        logu = mpc(gmpy2.log(absu), theta)
        powers = [mpc(1)]
        for _ in range(1, nmax):
            powers.append(powers[-1] * u)
        columns = []
        for d in range(derivatives + 1):
            ser = b.derivative_series(d)
            col = []
            for s in ser:
                total = mpc(0)
                logpow = mpc(1)
                for k, coeffs in enumerate(s.coefficients):
                    if k:
                        logpow = logpow * logu / k
                    acc = mpc(0)
                    for cn, pn in zip(coeffs[:nmax], powers):
                        if cn != 0:
                            acc += cn * pn
                    total += acc * logpow
                    if nmax >= len(coeffs) and 0 < q < 1:
                        # truncated by the stored order: bound the rest geometrically
                        last = max(abs(cn * pn) for cn, pn in zip(coeffs[-4:], powers[nmax - 4:nmax]))
                        tail = last * q / (1 - q)
                        if tail > tol * max(abs(acc), mpfr(1)):
                            raise TruncationError(
                                f"series tail {float(tail):.2e} above tolerance at ratio {float(q):.3f} "
                                f"with {len(coeffs)} terms"
                            )
                if s.exponent != 0:
                    e = s.exponent
                    if Fraction(e).denominator == 1:
                        total *= u ** int(e)
                    else:
                        total *= gmpy2.exp(mpc(e.numerator) / e.denominator * logu)
                col.append(total)
            columns.append(col)
        return [list(r) for r in zip(*columns)]


def formal_monodromy(b: FrobeniusBasis, winding: int = 1) -> list:
    """Matrix ``M`` with (basis continued ``winding`` times anticlockwise) = M * basis."""
    ctx = b.ctx
    with ctx.scope():
        two_pi_i = mpc(0, 2 * gmpy2.const_pi()) * winding
        index = {(lead[1], lead[2], s.exponent): i for i, (lead, s) in enumerate(zip(b.leading, b.solutions))}
        mat = []
        for s in b.solutions:
            e = s.exponent
            phase = gmpy2.exp(two_pi_i * mpc(e.numerator) / e.denominator)
            kk = len(s.coefficients)
            row = [mpc(0)] * b.dimension
            for (n, k, rho0), i in index.items():
                if rho0 != e:
                    continue
                acc = mpc(0)
                fact = mpc(1)
                for j in range(0, kk - k):
                    if j:
                        fact = fact * two_pi_i / j
                    acc += s.coefficients[k + j][n] * fact
                row[i] = phase * acc
            mat.append(row)
        return mat


def classify_point(op: FuchsianOperator, point, ctx: PrecisionContext) -> SingularPoint:
    """Exponents at ``point`` and whether all local solutions are holomorphic."""
    if point == INFINITY:
        return SingularPoint(INFINITY, tuple(indicial_exponents(op, INFINITY, ctx)), False)
    exps = indicial_exponents(op, point, ctx)
    span = int(max(exps) - min(exps)) + 2
    small = ctx.replace(truncation_order=max(span, 4))
    basis = frobenius_basis(op, point, small, exact=op.exact and is_exact(point),
                            radius=mpfr(1))
    apparent = (not basis.has_logs and all(Fraction(e).denominator == 1 and e >= 0 for e in exps)
                and len(set(exps)) == len(exps))
    return SingularPoint(point, tuple(exps), apparent)
