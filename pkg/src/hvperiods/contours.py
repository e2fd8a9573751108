"""Integrals of paired tensor products of elliptic periods over lambda-contours.

The integrand ``r . (omega(lambda, 1) x omega(lambda, phi))`` is assembled
from the station ladder of a two-operator continuation: on a leg served by
station ``s`` it equals ``r (P1 x P2) (F1 x F2)``, so each leg contributes
``r (P1 x P2) J`` with ``J`` the integral of ``F1 x F2`` over the leg.  Leg
integrals depend only on geometry and branch, and are reused when a path
returns along a leg it has already integrated.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import gmpy2
import mpmath
from gmpy2 import mpc, mpfr
from mpmath.calculus.quadrature import GaussLegendre

from .fuchsian import continuous_arg, evaluate_basis
from .hv_elliptic import elliptic_field, elliptic_singular_set, parse_phi
from .numerics import PrecisionContext, kron, mat_inv, mat_mul, to_big, vec_mat
from .relations import pairing_row, tensor_vector
from .transport import (
    Arc,
    Continuation,
    FieldState,
    Leg,
    PathError,
    PlanePath,
    Segment,
    compose,
    exclusion_radius,
    standard_basepoint,
    standard_loop,
    standard_route,
)

MIN_NODES = 64
MAX_NODES = 4096


class ContourError(ValueError):
    """Ill-defined contour integral (branch or invariance failure)."""


class QuadratureFailure(ArithmeticError):
    """Tolerance not reached within the node budget."""


@dataclass(frozen=True)
class QuadratureResult:
    value: object
    node_count: int
    error_estimate: mpfr
    legs: int = 0


@dataclass(frozen=True)
class ContourSpec:
    kind: str                      # "open" or "closed"
    path: PlanePath
    endpoint_singularities: tuple | None = None
    name: str = ""
    detour: str = "upper"

    def __post_init__(self):
        if self.kind not in ("open", "closed"):
            raise ContourError(f"unknown contour kind {self.kind!r}")
        if self.kind == "open" and self.endpoint_singularities is not None \
                and len(self.endpoint_singularities) != 2:
            raise ContourError("open contours carry a pair of endpoint singularities")


@dataclass
class TensorPeriodField:
    """``omega(lambda, 1) x omega(lambda, phi)`` with a fixed pairing row."""

    phi: object
    continuation: Continuation
    frames: list
    pairing: list
    basepoint: object
    _legs: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def origin(self):
        return self.continuation.station(to_big(0, self.continuation.ctx))

    def start_state(self) -> FieldState:
        cont = self.continuation
        return cont.initial_state(to_big(self.basepoint, cont.ctx), self.frames, station=self.origin())


def tensor_field(phi, G, ctx: PrecisionContext) -> TensorPeriodField:
    """Field for the pairing ``G^T Sigma_22`` (``G`` a 4-vector or a pair ``(g1, g2)``)."""
    phi = parse_phi(phi)
    if len(G) == 2:
        G = tensor_vector(*G)
    cont, frames = elliptic_field([1, phi], ctx)
    b = standard_basepoint(cont.singular, ctx)
    with ctx.scope():
        row = [to_big(x) for x in pairing_row(G)]
    return TensorPeriodField(phi, cont, frames, row, b)


# --------------------------------------------------------------------------
# quadrature rules


@lru_cache(maxsize=64)
def _gl_nodes(degree: int, bits: int) -> tuple:
    ctxmp = mpmath.MPContext()
    ctxmp.prec = bits + 20
    raw = GaussLegendre(ctxmp).calc_nodes(degree, ctxmp.prec)
    out = []
    for x, w in raw:
        out.append((_mpf(x, bits), _mpf(w, bits)))
    return tuple(out)


def _mpf(x, bits) -> mpfr:
    sign, man, exp, _ = x._mpf_
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        v = mpfr(int(man)) * mpfr(2) ** int(exp) if man else mpfr(0)
        return -v if sign else v


def _vec_add(acc, v, w):
    return [a + w * b for a, b in zip(acc, v)]


def _vnorm(v) -> mpfr:
    return max((abs(x) for x in v), default=mpfr(0))


def gauss_legendre(f, ctx: PrecisionContext, tol, max_nodes: int = MAX_NODES):
    """Integral of vector-valued ``f`` over [-1, 1] with node doubling (48, 96, ...)."""
    prev = None
    count = 0
    degree = 5
    while True:
        nodes = _gl_nodes(degree, ctx.bits)
        acc = None
        for x, w in nodes:
            v = f(x)
            acc = [w * b for b in v] if acc is None else _vec_add(acc, v, w)
            count += 1
        if prev is not None:
            err = _vnorm([a - b for a, b in zip(acc, prev)])
            if err <= tol * max(_vnorm(acc), mpfr(1)):
                return acc, count, err
        if len(nodes) * 2 > max_nodes:
            raise QuadratureFailure(f"Gauss-Legendre did not converge with {len(nodes)} nodes")
        prev = acc
        degree += 1


def tanh_sinh_left(f, ctx: PrecisionContext, tol, max_nodes: int = MAX_NODES):
    """Integral over (0, 1) of ``f(x)`` with a possible singularity at ``x = 0``.

    ``f`` receives ``x`` computed without cancellation.  Nodes closer to 0 than
    ``10^(-working_digits)`` are dropped; for integrands with at worst
    logarithmic growth the omitted tail is below ``10^(-working_digits/2)``.
    """
    digits = ctx.working_digits
    pi = gmpy2.const_pi()
    t_max = gmpy2.asinh(mpfr(digits + 10) * gmpy2.log(mpfr(10)) / pi)
    cutoff = mpfr(10) ** (-digits)
    h = t_max / (MIN_NODES // 2)

    def node(t):
        v = pi * gmpy2.sinh(t)
        e = gmpy2.exp(-v)
        x = 1 / (1 + e)
        one_minus = e / (1 + e)
        return x, pi * gmpy2.cosh(t) * x * one_minus

    def level_sum(ts):
        acc = None
        n = 0
        for t in ts:
            x, w = node(t)
            if x < cutoff or w == 0:
                continue
            v = f(x)
            acc = [w * b for b in v] if acc is None else _vec_add(acc, v, w)
            n += 1
        return acc, n

    k_max = MIN_NODES // 2
    total, count = level_sum(h * k for k in range(-k_max, k_max + 1))
    estimate = [h * x for x in total]
    while True:
        if 4 * k_max + 1 > max_nodes:
            raise QuadratureFailure(f"tanh-sinh did not converge with {count} nodes")
        h = h / 2
        k_max *= 2
        new, n = level_sum(h * k for k in range(-k_max + 1, k_max, 2))
        count += n
        if new is not None:
            total = [a + b for a, b in zip(total, new)]
        refined = [h * x for x in total]
        err = _vnorm([a - b for a, b in zip(refined, estimate)])
        if err <= tol * max(_vnorm(refined), mpfr(1)):
            return refined, count, err
        estimate = refined


def trapezoid_periodic(f, ctx: PrecisionContext, tol, max_nodes: int = MAX_NODES):
    """Integral over one period [0, 1) of a smooth periodic ``f``."""
    n = MIN_NODES
    total = None
    for k in range(n):
        v = f(mpfr(k) / n)
        total = v if total is None else [a + b for a, b in zip(total, v)]
    estimate = [x / n for x in total]
    count = n
    while True:
        for k in range(1, 2 * n, 2):
            v = f(mpfr(k) / (2 * n))
            total = [a + b for a, b in zip(total, v)]
        count += n
        n *= 2
        refined = [x / n for x in total]
        err = _vnorm([a - b for a, b in zip(refined, estimate)])
        if err <= tol * max(_vnorm(refined), mpfr(1)):
            return refined, count, err
        if n * 2 > max_nodes:
            raise QuadratureFailure(f"trapezoid rule did not converge with {n} nodes")
        estimate = refined


# --------------------------------------------------------------------------
# legs


def _tensor_values(cont: Continuation, st, z, arg, offset=None) -> list:
    cols = []
    for i in range(len(cont.ops)):
        b = st.bases[i]
        v = evaluate_basis(b, z, arg=arg if st.branched else None, offset=offset,
                           tolerance=cont.ctx.eps * 10 ** 10)
        cols.append([row[0] for row in v])
    out = cols[0]
    for c in cols[1:]:
        out = [a * b for a in out for b in c]
    return out


def leg_integral(cont: Continuation, leg: Leg, arg0, tol) -> tuple[list, int, mpfr]:
    """``J = integral of F1 x F2 dz`` along ``leg`` (``arg0``: branch at its start)."""
    st = leg.station
    c = st.center
    a, b = leg.a, leg.b
    ctx = cont.ctx
    touch = leg.touches_center()
    if leg.arc is not None:
        m, r, ta, tb = leg.arc
        full = abs(abs(tb - ta) - 2 * gmpy2.const_pi()) < mpfr(10) ** -30
        half = (tb - ta) / 2
        mid = (ta + tb) / 2
        if full and not st.branched:
            def g(x):
                theta = ta + (tb - ta) * x
                e = mpc(gmpy2.cos(theta), gmpy2.sin(theta))
                vals = _tensor_values(cont, st, m + r * e, None, offset=r * e)
                dz = mpc(0, 1) * r * e * (tb - ta)
                return [v * dz for v in vals]
            return trapezoid_periodic(g, ctx, tol)

        def g(x):
            theta = mid + half * x
            e = mpc(gmpy2.cos(theta), gmpy2.sin(theta))
            vals = _tensor_values(cont, st, m + r * e, arg0 + (theta - ta), offset=r * e)
            dz = mpc(0, 1) * r * e * half
            return [v * dz for v in vals]
        return gauss_legendre(g, ctx, tol)
    if touch == "start":
        d = b - a

        def g(x):
            u = d * x
            return [v * d for v in _tensor_values(cont, st, None, arg0, offset=u)]
        return tanh_sinh_left(g, ctx, tol)
    if touch == "end":
        d = a - b
        arg_a = arg0

        def g(x):
            u = d * x
            return [-v * d for v in _tensor_values(cont, st, None, arg_a, offset=u)]
        return tanh_sinh_left(g, ctx, tol)
    half = (b - a) / 2
    mid = (a + b) / 2

    def g(x):
        z = mid + half * x
        arg = continuous_arg(z - c, arg0) if st.branched else None
        return [v * half for v in _tensor_values(cont, st, z, arg, offset=z - c)]
    return gauss_legendre(g, ctx, tol)


def _leg_key(leg: Leg, arg0):
    st = leg.station
    turn = None if leg.arc is None else (leg.arc[2], leg.arc[3])
    return (id(st), leg.a, leg.b, turn, arg0 if st.branched else None)


# --------------------------------------------------------------------------
# integration along paths


def _integrate_path(fieldobj: TensorPeriodField, path: PlanePath, state: FieldState,
                    ctx: PrecisionContext, tol):
    cont = fieldobj.continuation
    acc = [mpc(0)]
    info = {"nodes": 0, "err": mpfr(0), "legs": 0}

    def on_leg(leg: Leg, st: FieldState):
        key = _leg_key(leg, st.arg)
        rkey = None
        if not leg.station.branched:
            turn = None if leg.arc is None else (leg.arc[3], leg.arc[2])
            rkey = (id(leg.station), leg.b, leg.a, turn, None)
        with fieldobj._lock:
            hit = fieldobj._legs.get(key)
            if hit is None and rkey is not None and rkey in fieldobj._legs:
                J, _, err = fieldobj._legs[rkey]
                hit = ([-x for x in J], 0, err)
        if hit is None:
            hit = leg_integral(cont, leg, st.arg, tol)
            with fieldobj._lock:
                fieldobj._legs[key] = hit
        J, n, err = hit
        weight = vec_mat(fieldobj.pairing, kron(st.P[0], st.P[1]))
        acc[0] += sum(w * j for w, j in zip(weight, J))
        wmax = max(abs(w) for w in weight)
        info["nodes"] += n
        info["err"] += wmax * err * len(J)
        info["legs"] += 1

    cont.traverse(path, state, on_leg=on_leg)
    return acc[0], info


def _lead_in(fieldobj: TensorPeriodField, target, direction_turns, ctx: PrecisionContext) -> PlanePath:
    """Route from the basepoint to ``target``, arriving along ``direction_turns``."""
    cont = fieldobj.continuation
    if cont.singular_at(to_big(target, ctx)) is None:
        route, _ = standard_route(fieldobj.basepoint, target, cont.singular, ctx, stop_short=False)
        return route
    route, alpha = standard_route(fieldobj.basepoint, target, cont.singular, ctx)
    rho = exclusion_radius(target, cont.singular, ctx)
    with ctx.scope():
        delta = mpfr(direction_turns) - mpfr(alpha)
        delta = delta - gmpy2.rint(delta)
        if delta == mpfr("-0.5"):
            delta = mpfr("0.5")
        if abs(delta) < mpfr(10) ** -40:
            return route
        arc = Arc(target, rho, mpfr(alpha), mpfr(alpha) + delta, 1 if delta > 0 else -1)
    return PlanePath(route.pieces + (arc,))


def _direction_turns(path: PlanePath, ctx: PrecisionContext):
    first = path.pieces[0]
    with ctx.scope():
        if isinstance(first, Segment):
            d = to_big(first.end) - to_big(first.start)
        else:
            raise ContourError("open contours must begin with a segment")
        return gmpy2.atan2(d.imag, d.real) / (2 * gmpy2.const_pi())


def integrate_open(spec: ContourSpec, fieldobj: TensorPeriodField, ctx: PrecisionContext) -> QuadratureResult:
    """Integral over an open chain, possibly with singular endpoints."""
    if spec.kind != "open":
        raise ContourError("integrate_open needs an open contour")
    if not spec.path.pieces:
        with ctx.scope():
            return QuadratureResult(mpc(0), 0, mpfr(0))
    cont = fieldobj.continuation
    ends = spec.endpoint_singularities or ()
    cont.validate(spec.path, allowed_endpoints=ends)
    lead = _lead_in(fieldobj, spec.path.pieces[0].start, _direction_turns(spec.path, ctx), ctx)
    with ctx.scope():
        state = fieldobj.start_state()
        cont.traverse(lead, state)
        value, info = _integrate_path(fieldobj, spec.path, state, ctx, _leg_tol(ctx))
        return QuadratureResult(value, info["nodes"], info["err"], info["legs"])


def _leg_tol(ctx: PrecisionContext) -> mpfr:
    with ctx.scope():
        return mpfr(ctx.target_tolerance) / 1000


def _contour_monodromy(fieldobj: TensorPeriodField, state_before: FieldState,
                       state_after: FieldState, z) -> list:
    cont = fieldobj.continuation
    mats = []
    for i in range(len(cont.ops)):
        after = cont.frame_at(state_after, z, i, state_before.station, state_before.arg)
        before = cont.frame_at(state_before, z, i, state_before.station, state_before.arg)
        mats.append(mat_mul(after, mat_inv(before)))
    return mats


def _copy_state(s: FieldState) -> FieldState:
    return FieldState(s.station, [list(map(list, p)) for p in s.P], s.arg)


def _prepare_closed(spec: ContourSpec, fieldobj: TensorPeriodField, ctx: PrecisionContext):
    if spec.kind != "closed":
        raise ContourError("a closed contour is required")
    if not spec.path.is_closed(ctx):
        raise ContourError("contour does not return to its starting point")
    cont = fieldobj.continuation
    cont.validate(spec.path)
    state = fieldobj.start_state()
    with ctx.scope():
        start = spec.path.start(ctx)
        if abs(start - to_big(fieldobj.basepoint)) > mpfr(10) ** (-(ctx.working_digits // 2)):
            route, _ = standard_route(fieldobj.basepoint, start, cont.singular, ctx, stop_short=False)
            cont.traverse(route, state)
    return state, start


def invariance_check(spec: ContourSpec, fieldobj: TensorPeriodField, ctx: PrecisionContext) -> bool:
    """True iff the pairing row is fixed by the total monodromy of ``spec``."""
    state, start = _prepare_closed(spec, fieldobj, ctx)
    with ctx.scope():
        before = _copy_state(state)
        fieldobj.continuation.traverse(spec.path, state)
        return _row_invariant(fieldobj, before, state, start, ctx)


def _row_invariant(fieldobj, before, after, z, ctx) -> bool:
    mats = _contour_monodromy(fieldobj, before, after, z)
    total = kron(mats[0], mats[1])
    moved = vec_mat(fieldobj.pairing, total)
    dev = max(abs(a - b) for a, b in zip(moved, fieldobj.pairing))
    return dev <= mpfr(ctx.target_tolerance)


def integrate_closed(spec: ContourSpec, fieldobj: TensorPeriodField, ctx: PrecisionContext) -> QuadratureResult:
    """Integral over a closed composition of loops; the pairing must be invariant."""
    state, start = _prepare_closed(spec, fieldobj, ctx)
    with ctx.scope():
        before = _copy_state(state)
        value, info = _integrate_path(fieldobj, spec.path, state, ctx, _leg_tol(ctx))
        if not _row_invariant(fieldobj, before, state, start, ctx):
            raise ContourError("pairing row is not invariant under the contour's monodromy")
        return QuadratureResult(value, info["nodes"], info["err"], info["legs"])


def _route_to(fieldobj: TensorPeriodField, lam, ctx: PrecisionContext, side: str) -> PlanePath:
    cont = fieldobj.continuation
    with ctx.scope():
        z = to_big(lam)
        for sp in cont.singular:
            zs = to_big(sp)
            rho = exclusion_radius(sp, cont.singular, ctx)
            if abs(z - zs) >= rho:
                continue
            if abs(z - zs) <= mpfr(10) ** (-(ctx.working_digits // 2)):
                raise PathError(f"the integrand is not evaluated at the singular point {sp}")
            route, alpha = standard_route(fieldobj.basepoint, sp, cont.singular, ctx, side=side)
            beta = gmpy2.atan2((z - zs).imag, (z - zs).real) / (2 * gmpy2.const_pi())
            turn = beta - alpha
            turn -= gmpy2.rint(turn)
            pieces = list(route.pieces)
            on_circle = zs + rho * (z - zs) / abs(z - zs)
            if turn != 0:
                pieces.append(Arc(sp, rho, alpha, alpha + turn, 1 if turn > 0 else -1))
            pieces.append(Segment(on_circle, z))
            return PlanePath(tuple(pieces))
    route, _ = standard_route(fieldobj.basepoint, lam, cont.singular, ctx, side=side, stop_short=False)
    return route


def integrand(lam, fieldobj: TensorPeriodField, ctx: PrecisionContext, side: str = "upper"):
    """Paired integrand at ``lam``, continued from the basepoint along the standard route.

    Inside the exclusion disk of a singular point ``s`` the route stops on the
    disk's circle, follows it to the direction of ``lam`` and then runs radially in.
    """
    cont = fieldobj.continuation
    route = _route_to(fieldobj, lam, ctx, side)
    with ctx.scope():
        state = fieldobj.start_state()
        cont.traverse(route, state)
        z = to_big(lam)
        arg = cont._arg_at(state.station, z, state.arg)
        vals = []
        for i in range(2):
            W = cont._values(state.station, i, z, arg)
            vals.append([sum(state.P[i][r][k] * W[k][0] for k in range(2)) for r in range(2)])
        prod = [a * b for a in vals[0] for b in vals[1]]
        return sum(w * p for w, p in zip(fieldobj.pairing, prod))


# --------------------------------------------------------------------------
# built-in contours


def detour_segment(a, b, singular: Sequence, ctx: PrecisionContext, side: str = "upper") -> PlanePath:
    """Segment from ``a`` to ``b`` with half-circle detours around interior singular points."""
    with ctx.scope():
        za, zb = to_big(a), to_big(b)
        length = abs(zb - za)
        unit = (zb - za) / length
        tiny = mpfr(10) ** (-(ctx.working_digits // 2))
        inner = []
        for s in singular:
            zs = to_big(s)
            t = ((zs - za) * unit.conjugate()).real
            perp = abs(((zs - za) * unit.conjugate()).imag)
            rho = exclusion_radius(s, singular, ctx)
            if tiny < t < length - tiny:
                if perp <= tiny:
                    inner.append((t, s, rho))
                elif perp < rho:
                    raise PathError(f"singular point {complex(zs)} lies too close to the contour")
        inner.sort(key=lambda x: x[0])
        d_turns = gmpy2.atan2(unit.imag, unit.real) / (2 * gmpy2.const_pi())
        pieces = []
        cur = a
        for t, s, rho in inner:
            zs = to_big(s)
            pieces.append(Segment(cur, zs - rho * unit))
            left = Arc(s, rho, d_turns + mpfr("0.5"), d_turns, -1)
            right = Arc(s, rho, d_turns + mpfr("0.5"), d_turns + 1, 1)
            apex_left = (zs + rho * unit * mpc(0, 1)).imag
            apex_right = (zs - rho * unit * mpc(0, 1)).imag
            upper, lower = (left, right) if apex_left >= apex_right else (right, left)
            pieces.append(upper if side == "upper" else lower)
            cur = zs + rho * unit
        pieces.append(Segment(cur, b))
        return PlanePath(tuple(pieces))


@dataclass(frozen=True)
class BuiltinIdentity:
    name: str
    phi: object
    contour: ContourSpec
    g1: tuple
    g2: tuple
    gamma: tuple


BUILTIN_NAMES = ("vanishing-1-9", "vanishing-1-25", "t3-holomorphic")


def builtin_identity(name: str, phi, ctx: PrecisionContext, detour: str = "upper") -> BuiltinIdentity:
    phi = parse_phi(phi)
    names = elliptic_singular_set(phi, ctx)
    cont, _ = elliptic_field([1, phi], ctx)
    sing = cont.singular
    half = Fraction(1, 2)
    if name == "vanishing-1-9":
        a, b = names.resolve("lambda=varphi"), Fraction(1, 9)
        path = detour_segment(a, b, sing, ctx, detour)
        spec = ContourSpec("open", path, (a, b), name, detour)
        return BuiltinIdentity(name, phi, spec, (1, 0), (1, 1), (half, 0, -5 * half, half))
    if name == "vanishing-1-25":
        a, b = names.resolve("lambda=varphi/(1-2sqrt(varphi))^2"), Fraction(1, 9)
        path = detour_segment(a, b, sing, ctx, detour)
        spec = ContourSpec("open", path, (a, b), name, detour)
        return BuiltinIdentity(name, phi, spec, (1, 0), (1, 2), (0, 0, -5 * half, 0))
    if name == "t3-holomorphic":
        base = standard_basepoint(sing, ctx)
        loops = [standard_loop(base, names.resolve(n), sing, ctx)
                 for n in ("lambda=0", "lambda=varphi/(1+2sqrt(varphi))^2",
                           "lambda=varphi", "lambda=varphi/(1-2sqrt(varphi))^2")]
        spec = ContourSpec("closed", compose(loops, ctx), None, name, "upper")
        return BuiltinIdentity(name, phi, spec, (0, 1), (0, 1), (Fraction(-1), 0, 0, 0))
    raise KeyError(f"unknown built-in contour {name!r}; choose from {', '.join(BUILTIN_NAMES)}")


def integrate_spec(spec: ContourSpec, phi, G, ctx: PrecisionContext,
                   fieldobj: TensorPeriodField | None = None) -> QuadratureResult:
    fieldobj = fieldobj or tensor_field(phi, G, ctx)
    if spec.kind == "open":
        return integrate_open(spec, fieldobj, ctx)
    return integrate_closed(spec, fieldobj, ctx)


def integrate_builtin(ident: BuiltinIdentity, ctx: PrecisionContext) -> QuadratureResult:
    return integrate_spec(ident.contour, ident.phi, (ident.g1, ident.g2), ctx)
