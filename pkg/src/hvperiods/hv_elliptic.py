"""The Hulek-Verrill elliptic family with parameters (1, 1, 1/phi)."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction

import gmpy2
from gmpy2 import mpc, mpfr

from .fuchsian import (
    INFINITY,
    FrobeniusBasis,
    FuchsianOperator,
    frobenius_basis,
)
from .numerics import (
    Poly,
    PrecisionContext,
    det,
    format_big,
    is_exact,
    mat_inv,
    mat_mul,
    nearest_integer_matrix,
    to_big,
)
from .transport import Continuation, standard_basepoint, standard_loop

ORACLE_MAX_N = 12


@dataclass(frozen=True)
class EllipticParams:
    a: object = 1
    b: object = 1
    c: object = 1

    def __post_init__(self):
        if self.c == 0:
            raise ValueError("c must be nonzero")

    @classmethod
    def for_phi(cls, phi) -> "EllipticParams":
        phi = parse_phi(phi)
        return cls(1, 1, 1 / phi)


_TERM = re.compile(r"[+-]?[^+-]+")
COMPLEX_BITS = 8192


def _complex_rational(s: str) -> tuple[Fraction, Fraction]:
    """``"1/10+i/10"``, ``"0.1+0.1i"``, ``"2i"``: real and imaginary parts."""
    re_part, im_part = Fraction(0), Fraction(0)
    guarded = re.sub(r"([eE])([+-])", lambda m: m.group(1) + ("#" if m.group(2) == "-" else ""), s)
    terms = _TERM.findall(guarded)
    if not terms or "".join(terms) != guarded:
        raise ValueError(f"cannot parse {s!r}")
    for t in terms:
        t = t.replace("#", "-")
        if "i" in t or "j" in t:
            body = t.replace("*", "").replace("i", "").replace("j", "")
            sign = -1 if body.startswith("-") else 1
            body = body.lstrip("+-")
            if body.startswith("/"):
                body = "1" + body
            im_part += sign * Fraction(body or "1")
        else:
            re_part += Fraction(t)
    return re_part, im_part


def parse_phi(phi):
    """Exact Fraction for rational input, ``mpc`` otherwise; rejects 0.

    Complex strings with rational parts are held at ``COMPLEX_BITS`` so that
    any working precision below that sees them correctly rounded.
    """
    if isinstance(phi, str):
        s = phi.strip().replace(" ", "")
        try:
            phi = Fraction(s)
        except ValueError:
            re_part, im_part = _complex_rational(s)
            if im_part == 0:
                phi = re_part
            else:
                with gmpy2.context(gmpy2.get_context(), precision=COMPLEX_BITS):
                    phi = mpc(gmpy2.mpq(re_part.numerator, re_part.denominator),
                              gmpy2.mpq(im_part.numerator, im_part.denominator))
    if isinstance(phi, (int, Fraction)):
        phi = Fraction(phi)
    elif isinstance(phi, complex):
        phi = mpc(phi)
    elif isinstance(phi, float):
        phi = Fraction(phi)
    if phi == 0:
        raise ValueError("phi must be nonzero")
    return phi


def _r_polys(phi) -> tuple[Poly, Poly, Poly]:
    ip = 1 / phi
    r2 = Poly.of(3, ip - 4) * Poly.of(1, -1 / phi) * Poly.of(1, -2 * (ip + 4), (ip - 4) ** 2)
    r1 = Poly.of(-6, 6 * (ip + 6), 2 * (ip - 4) * (3 * ip + 8),
                 -2 * (ip - 4) * (8 - 6 * ip + 3 * ip * ip))
    r0 = Poly.of(3, -(ip + 14), -(ip + 2) * (3 * ip - 10), (ip - 4) * (4 - 2 * ip + ip * ip))
    return r0, r1, r2


def elliptic_operator(phi, ctx: PrecisionContext | None = None) -> FuchsianOperator:
    """``R2 (theta+1)^2 + R1 (theta+1) + R0`` in lambda."""
    phi = parse_phi(phi)
    if not is_exact(phi):
        if ctx is None:
            raise ValueError("complex phi needs a precision context")
        with ctx.scope():
            phi = to_big(phi)
            return FuchsianOperator(2, Fraction(1), _r_polys(phi), "lambda", f"HV elliptic phi={phi}")
    return FuchsianOperator(2, Fraction(1), _r_polys(phi), "lambda", f"HV elliptic phi={phi}")


def f0_coefficients(phi, n_terms: int) -> list:
    """``sum_k C(n,k)^2 C(2k,k) phi^(k-n)`` for ``n < n_terms``."""
    phi = parse_phi(phi)
    out = []
    for n in range(n_terms):
        out.append(sum(math.comb(n, k) ** 2 * math.comb(2 * k, k) * phi ** (k - n)
                       for k in range(n + 1)))
    return out


def constant_term_oracle(phi, n: int):
    """Constant term of ``[(X1 + X2 + 1)(1/X1 + 1/X2 + 1/phi)]^n``.

    Direct expansion over exponent vectors; independent of the binomial sum.
    """
    if n > ORACLE_MAX_N:
        raise ValueError(f"oracle is limited to n <= {ORACLE_MAX_N}")
    phi = parse_phi(phi)
    inv = 1 / phi
    factor = {}
    for (i1, i2, ci) in ((1, 0, 1), (0, 1, 1), (0, 0, 1)):
        for (j1, j2, cj) in ((-1, 0, 1), (0, -1, 1), (0, 0, inv)):
            key = (i1 + j1, i2 + j2)
            factor[key] = factor.get(key, 0) + ci * cj
    acc = {(0, 0): Fraction(1)}
    for _ in range(n):
        nxt: dict = {}
        for (a1, a2), u in acc.items():
            for (b1, b2), v in factor.items():
                key = (a1 + b1, a2 + b2)
                nxt[key] = nxt.get(key, 0) + u * v
        acc = nxt
    return acc.get((0, 0), 0)


# --------------------------------------------------------------------------
# singular set


def _sqrt(phi, ctx):
    if is_exact(phi):
        p = Fraction(phi)
        if p > 0:
            rn, rd = math.isqrt(p.numerator), math.isqrt(p.denominator)
            if rn * rn == p.numerator and rd * rd == p.denominator:
                return Fraction(rn, rd)
    with ctx.scope():
        return gmpy2.sqrt(to_big(phi))


SINGULAR_NAMES = (
    "lambda=0",
    "lambda=3varphi/(4varphi-1)",
    "lambda=varphi/(1+2sqrt(varphi))^2",
    "lambda=varphi",
    "lambda=varphi/(1-2sqrt(varphi))^2",
)


@dataclass(frozen=True)
class EllipticSingularSet:
    """Named finite singular points (``None`` where a formula degenerates) plus infinity."""

    phi: object
    locations: dict

    def finite(self) -> list:
        seen = []
        for v in self.locations.values():
            if v is None or v == INFINITY:
                continue
            if all(not _close(v, w) for w in seen):
                seen.append(v)
        return seen

    def resolve(self, name: str):
        key = name.replace(" ", "").replace("\\", "").replace("φ", "varphi").replace("phi", "varphi")
        key = key.replace("varvarphi", "varphi")
        if key in self.locations:
            v = self.locations[key]
            if v is None:
                raise ValueError(f"{name} degenerates at phi={self.phi}")
            return v
        if key.startswith("lambda="):
            try:
                return Fraction(key[len("lambda="):])
            except ValueError:
                pass
        raise ValueError(f"unknown singularity name {name!r}")


def _close(a, b) -> bool:
    if is_exact(a) and is_exact(b):
        return a == b
    return abs(mpc(to_big(a)) - mpc(to_big(b))) < mpfr(10) ** -30


def elliptic_singular_set(phi, ctx: PrecisionContext) -> EllipticSingularSet:
    phi = parse_phi(phi)
    r = _sqrt(phi, ctx)
    with ctx.scope():
        def div(a, b):
            if b == 0:
                return None
            return a / b
        locs = {
            "lambda=0": Fraction(0),
            "lambda=3varphi/(4varphi-1)": div(3 * phi, 4 * phi - 1),
            "lambda=varphi/(1+2sqrt(varphi))^2": div(phi, (1 + 2 * r) ** 2),
            "lambda=varphi": phi,
            "lambda=varphi/(1-2sqrt(varphi))^2": div(phi, (1 - 2 * r) ** 2),
            "lambda=infinity": INFINITY,
        }
    return EllipticSingularSet(phi, locs)


# --------------------------------------------------------------------------
# integral basis


@dataclass(frozen=True)
class IntegralEllipticBasis:
    """``omega = change_of_basis * (f0, f0 log(lambda) + f1)`` near lambda = 0."""

    phi: object
    basis: FrobeniusBasis
    change_of_basis: list
    log_phi: object


def change_of_basis(phi, ctx: PrecisionContext) -> list:
    """``(2 pi i) [[1, 0], [-log(phi)/(2 pi i), 3/(2 pi i)]]`` (principal log)."""
    phi = parse_phi(phi)
    with ctx.scope():
        tpi = mpc(0, 2 * gmpy2.const_pi())
        lp = gmpy2.log(to_big(phi))
        return [[tpi, mpc(0)], [-lp, mpc(3)]]


def integral_period_basis(phi, ctx: PrecisionContext) -> IntegralEllipticBasis:
    phi = parse_phi(phi)
    op = elliptic_operator(phi, ctx)
    basis = frobenius_basis(op, 0, ctx)
    with ctx.scope():
        lp = gmpy2.log(to_big(phi))
    return IntegralEllipticBasis(phi, basis, change_of_basis(phi, ctx), lp)


def elliptic_field(phis, ctx: PrecisionContext):
    """Continuation for several elliptic operators with their integral frames."""
    phis = [parse_phi(p) for p in phis]
    ops = [elliptic_operator(p, ctx) for p in phis]
    cont = Continuation(ops, ctx)
    frames = [change_of_basis(p, ctx) for p in phis]
    return cont, frames


def loop_monodromies(cont: Continuation, frames: list, ctx: PrecisionContext,
                     points=None, side: str = "upper", basepoint=None) -> dict:
    """Monodromy (integral frames) of every operator around each point.

    Keys are the singular points; values are lists with one 2x2 matrix per
    operator, acting as ``omega -> mu omega``.
    """
    points = list(cont.singular) if points is None else list(points)
    b = basepoint if basepoint is not None else standard_basepoint(cont.singular, ctx)
    out = {}
    with ctx.scope():
        origin = cont.station(to_big(0))
        zb = to_big(b)
        for s in points:
            path = standard_loop(b, s, cont.singular, ctx, side=side)
            cont.validate(path)
            state = cont.initial_state(zb, frames, station=origin)
            arg0 = state.arg
            cont.traverse(path, state)
            mats = []
            for i, frame in enumerate(frames):
                T = cont.frame_at(state, zb, i, origin, arg0)
                mats.append(mat_mul(T, mat_inv(frame)))
            out[s] = mats
    return out


def matrix_report(m: list, ctx: PrecisionContext) -> dict:
    with ctx.scope():
        ints, dist = nearest_integer_matrix(m)
        d = det(m)
        return {
            "integer_matrix": ints,
            "max_distance_to_integers": format_big(dist, 3),
            "det": format_big(d, 40),
            "det_minus_one": format_big(abs(d - 1), 3),
            "_dist": dist,
            "_det_dev": abs(d - 1),
        }


def sl2z_conjecture_check(phi, ctx: PrecisionContext, side: str = "upper",
                          integrality_tol: float = 1e-20, det_tol: float = 1e-30) -> dict:
    """Monodromies of ``omega(lambda, phi)`` around its finite singularities."""
    phi = parse_phi(phi)
    cont, frames = elliptic_field([phi], ctx)
    mons = loop_monodromies(cont, frames, ctx, side=side)
    names = elliptic_singular_set(phi, ctx)
    entries = []
    ok = True
    with ctx.scope():
        for s, (m,) in mons.items():
            rep = matrix_report(m, ctx)
            label = [k for k, v in names.locations.items()
                     if v is not None and v != INFINITY and _close(v, s)]
            integral = rep["_dist"] < integrality_tol
            unimodular = rep["_det_dev"] < det_tol
            ok = ok and integral and unimodular
            entries.append({
                "singularity": label or [format_big(s, 30)],
                "location": format_big(to_big(s), 40),
                "matrix": rep["integer_matrix"],
                "max_distance_to_integers": rep["max_distance_to_integers"],
                "det_minus_one": rep["det_minus_one"],
                "integral": integral,
                "det_one": unimodular,
            })
    return {
        "phi": str(phi) if is_exact(phi) else format_big(phi, 30),
        "route": side,
        "basepoint": str(standard_basepoint(cont.singular, ctx)),
        "monodromies": entries,
        "all_integral": ok,
    }
