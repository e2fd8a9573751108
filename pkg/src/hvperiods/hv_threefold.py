"""AESZ 34: operator asset, Frobenius periods and the integral symplectic basis."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from itertools import product
from pathlib import Path

import gmpy2
from gmpy2 import mpc, mpfr

from .fuchsian import (
    FrobeniusBasis,
    FuchsianOperator,
    IrregularPointError,
    NonIntegerExponentError,
    OperatorError,
    evaluate_basis,
    frobenius_basis,
    indicial_exponents,
    singular_locations,
)
from .numerics import (
    PrecisionContext,
    det,
    format_big,
    mat_inv,
    mat_mul,
    mat_sub,
    max_abs_entry,
    nearest_integer_matrix,
    to_big,
    transpose,
)
from .relations import sigma
from .transport import Continuation, standard_basepoint, standard_loop, standard_route

EXPECTED_SINGULAR = (Fraction(0), Fraction(1, 25), Fraction(1, 9), Fraction(1))


@dataclass(frozen=True)
class TopologicalData:
    H3: int = 12
    c2H: int = 12
    chi: int = -8

    @property
    def sigma(self) -> int:
        return self.H3 % 2

    def zeta3(self, ctx: PrecisionContext) -> mpfr:
        with ctx.scope():
            return gmpy2.zeta(mpfr(3))

    def top_matrix(self, ctx: PrecisionContext) -> list:
        """Rows ``(zeta3 chi/(2 pi i)^3, c2H/24, 0, H3/6)``, ``(c2H/24, sigma/2, -H3/2, 0)``, e3, e4."""
        with ctx.scope():
            tpi = mpc(0, 2 * gmpy2.const_pi())
            z3 = self.zeta3(ctx)
            c = Fraction(self.c2H, 24)
            return [
                [z3 * self.chi / tpi ** 3, c, 0, Fraction(self.H3, 6)],
                [c, Fraction(self.sigma, 2), -Fraction(self.H3, 2), 0],
                [1, 0, 0, 0],
                [0, 1, 0, 0],
            ]


def _asset_text(source) -> str:
    if source is None:
        return resources.files("hvperiods").joinpath("data/aesz34.json").read_text()
    if isinstance(source, dict):
        return json.dumps(source)
    return Path(source).read_text()


def load_aesz34(source=None, ctx: PrecisionContext | None = None) -> FuchsianOperator:
    """Load the operator and normalise it so that the periods start as ``phi + ...``.

    The raw operator (indices 0,0,0,0 at phi=0) is conjugated by ``phi``.
    Validation: indices (1,1,1,1) afterwards, an integral holomorphic seed
    ``phi + a_1 phi^2 + ...`` and the expected singular points.
    """
    ctx = ctx or PrecisionContext(40, 24, 1e-15)
    try:
        data = json.loads(_asset_text(source))
    except (OSError, json.JSONDecodeError) as exc:
        raise OperatorError(f"cannot read operator file: {exc}") from exc
    raw = FuchsianOperator.from_json(data)
    if raw.order != 4:
        raise OperatorError(f"AESZ 34 must have order 4, got {raw.order}")
    try:
        exps = indicial_exponents(raw, 0, ctx)
    except (IrregularPointError, NonIntegerExponentError) as exc:
        raise OperatorError(f"unexpected indices at phi=0: {exc}") from exc
    if exps == [0, 0, 0, 0]:
        op = raw.conjugate_by_power(1)
    elif exps == [1, 1, 1, 1]:
        op = raw
    else:
        raise OperatorError(f"unexpected indices {exps} at phi=0")
    op = FuchsianOperator(op.order, op.shift, op.coeffs, "varphi", "AESZ 34 (normalised)")
    if indicial_exponents(op, 0, ctx) != [1, 1, 1, 1]:
        raise OperatorError("normalised operator does not have indices (1,1,1,1) at phi=0")
    seed = frobenius_basis(op, 0, ctx.replace(truncation_order=8), exact=True)
    hol = seed.solutions[0].coefficients[0]
    if hol[0] != 1 or any(Fraction(c).denominator != 1 for c in hol):
        raise OperatorError(f"holomorphic seed is not integral: {hol}")
    sing = singular_locations(op, ctx)
    missing = [s for s in EXPECTED_SINGULAR if s not in sing]
    if missing:
        raise OperatorError(f"singular set {sing} lacks {missing}")
    return op


def oracle_coefficients(n_terms: int) -> list[int]:
    """``sum over a_1+...+a_5 = n of (n!/(a_1!...a_5!))^2`` by enumeration."""
    out = []
    for n in range(n_terms):
        total = 0
        fn = math.factorial(n)
        for a in product(range(n + 1), repeat=4):
            rest = n - sum(a)
            if rest < 0:
                continue
            m = fn
            for x in (*a, rest):
                m //= math.factorial(x)
            total += m * m
        out.append(total)
    return out


# --------------------------------------------------------------------------
# the Pi basis


@dataclass(frozen=True)
class PiBasis:
    """``Pi = prefactor * (y_0, y_1, y_2, y_3)`` with ``varpi_j = j! y_j``."""

    op: FuchsianOperator
    basis: FrobeniusBasis
    prefactor: list
    topology: TopologicalData


def pi_prefactor(ctx: PrecisionContext, topology: TopologicalData | None = None) -> list:
    topology = topology or TopologicalData()
    top = topology.top_matrix(ctx)
    with ctx.scope():
        tpi = mpc(0, 2 * gmpy2.const_pi())
        weights = [tpi ** 3 / tpi ** j * math.factorial(j) for j in range(4)]
        return [[to_big(top[i][j]) * weights[j] for j in range(4)] for i in range(4)]


@lru_cache(maxsize=8)
def _pi_basis(ctx: PrecisionContext) -> PiBasis:
    op = load_aesz34()
    basis = frobenius_basis(op, 0, ctx)
    return PiBasis(op, basis, pi_prefactor(ctx), TopologicalData())


def pi_basis(ctx: PrecisionContext) -> PiBasis:
    return _pi_basis(ctx)


def varpi(phi, ctx: PrecisionContext) -> list:
    """``varpi_j(phi)`` for ``phi`` in the convergence disk at 0 (principal log)."""
    pb = pi_basis(ctx)
    with ctx.scope():
        vals = evaluate_basis(pb.basis, to_big(phi))
        return [vals[j][0] * math.factorial(j) for j in range(4)]


def pi_vector(phi, ctx: PrecisionContext, side: str = "upper") -> list:
    """``Pi(phi)``; points outside the safe disk at 0 are reached by transport."""
    pb = pi_basis(ctx)
    with ctx.scope():
        z = to_big(phi)
        if abs(z) <= pb.basis.radius / 2:
            vals = evaluate_basis(pb.basis, z)
            return [sum(pb.prefactor[i][j] * vals[j][0] for j in range(4)) for i in range(4)]
    cont = _continuation(ctx)
    b = standard_basepoint(cont.singular, ctx)
    route, _ = standard_route(b, phi, cont.singular, ctx, side=side, stop_short=False)
    with ctx.scope():
        origin = cont.station(to_big(0), bases=(pb.basis,))
        state = cont.initial_state(to_big(b), [pb.prefactor], station=origin)
        cont.traverse(route, state)
        arg = cont._arg_at(state.station, z, state.arg)
        W = cont._values(state.station, 0, z, arg)
        P = state.P[0]
        return [sum(P[i][k] * W[k][0] for k in range(4)) for i in range(4)]


@lru_cache(maxsize=8)
def _continuation(ctx: PrecisionContext) -> Continuation:
    return Continuation([pi_basis(ctx).op], ctx)


@dataclass(frozen=True)
class ThreefoldMonodromy:
    singularity: object
    route: str
    orientation: str
    matrix: list
    integer_matrix: list
    max_distance_to_integers: mpfr
    symplectic_deviation: mpfr
    det: object

    def report(self) -> dict:
        return {
            "singularity": str(self.singularity),
            "route": self.route,
            "orientation": self.orientation,
            "matrix": self.integer_matrix,
            "max_distance_to_integers": format_big(self.max_distance_to_integers, 3),
            "symplectic_deviation": format_big(self.symplectic_deviation, 3),
            "det": format_big(self.det, 30),
            "convention": f"Pi -> M Pi after one {self.orientation} turn",
        }


def threefold_monodromy(singularity, ctx: PrecisionContext, side: str = "upper",
                        orientation: str = "anticlockwise") -> ThreefoldMonodromy:
    """Monodromy of ``Pi`` around ``singularity`` along the standard loop.

    ``orientation="clockwise"`` transports around the reversed loop; the
    result is the inverse of the anticlockwise matrix and is the matrix
    acting on cycle vectors.
    """
    if orientation not in ("anticlockwise", "clockwise"):
        raise ValueError(f"unknown orientation {orientation!r}")
    pb = pi_basis(ctx)
    cont = _continuation(ctx)
    b = standard_basepoint(cont.singular, ctx)
    winding = 1 if orientation == "anticlockwise" else -1
    path = standard_loop(b, singularity, cont.singular, ctx, side=side, winding=winding)
    cont.validate(path)
    with ctx.scope():
        origin = cont.station(to_big(0), bases=(pb.basis,))
        zb = to_big(b)
        state = cont.initial_state(zb, [pb.prefactor], station=origin)
        arg0 = state.arg
        cont.traverse(path, state)
        T = cont.frame_at(state, zb, 0, origin, arg0)
        M = mat_mul(T, mat_inv(pb.prefactor))
        ints, dist = nearest_integer_matrix(M)
        s4 = [[to_big(x) for x in row] for row in sigma(4)]
        dev = max_abs_entry(mat_sub(mat_mul(mat_mul(transpose(M), s4), M), s4))
        return ThreefoldMonodromy(singularity, side, orientation, M, ints, dist, dev, det(M))


def holomorphic_period_oracle(phi, ctx: PrecisionContext):
    """``Pi_3(phi)`` recovered from the elliptic side by the torus contour.

    The contour identity reads ``-Pi_3 = (0,1)x(0,1) Sigma_22 \\oint ...``,
    so the oracle is minus the contour integral.
    """
    from .contours import builtin_identity, integrate_builtin

    spec = builtin_identity("t3-holomorphic", phi, ctx)
    result = integrate_builtin(spec, ctx)
    with ctx.scope():
        return -result.value
