"""Analytic continuation along piecewise paths.

A path is followed through a ladder of stations: points carrying a local
Frobenius basis for every operator of the field.  Consecutive stations
overlap, and at a switch point ``z`` the change of basis is
``T = W_old(z) W_new(z)^-1`` where ``W`` holds values and derivatives.
A global solution vector is tracked as ``P * F_station``; switching updates
``P <- P T``.  Branches of ``log(z - c)`` at singular stations are tracked
as a continuous argument.

Matrix convention: continuing a basis ``B`` along a path gives ``T B'``.
For loops ``B' = B`` and ``T`` is the monodromy ``mu`` with ``B -> mu B``.
Traversing ``p1`` then ``p2`` yields ``T(p1) T(p2)``.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import gmpy2
from gmpy2 import mpc, mpfr

from .fuchsian import (
    FrobeniusBasis,
    FuchsianOperator,
    TruncationError,
    continuous_arg,
    evaluate_basis,
    frobenius_basis,
    singular_locations,
)
from .numerics import (
    PrecisionContext,
    det,
    identity,
    is_exact,
    mat_inv,
    mat_mul,
    max_abs_entry,
    mat_sub,
    to_big,
)

SAFETY_RATIO = Fraction(1, 2)
EXCLUSION_FRACTION = Fraction(1, 8)


class PathError(ValueError):
    """Malformed or inadmissible path."""


class ExclusionError(PathError):
    """A path piece comes too close to a singular point."""


# --------------------------------------------------------------------------
# path pieces (angles are measured in turns: 1 = full circle)


@dataclass(frozen=True)
class Segment:
    start: object
    end: object

    def reversed(self) -> "Segment":
        return Segment(self.end, self.start)


@dataclass(frozen=True)
class Arc:
    center: object
    radius: object
    start_angle: object
    end_angle: object
    orientation: int

    def __post_init__(self):
        if self.orientation not in (1, -1):
            raise PathError("arc orientation must be +1 or -1")
        delta = self.end_angle - self.start_angle
        if delta == 0 or (delta > 0) != (self.orientation > 0):
            raise PathError("arc angles disagree with its orientation")

    def reversed(self) -> "Arc":
        return Arc(self.center, self.radius, self.end_angle, self.start_angle, -self.orientation)


@dataclass(frozen=True)
class Loop:
    center: object
    radius: object
    basepoint_angle: object = 0
    orientation: int = 1

    def __post_init__(self):
        if self.orientation not in (1, -1):
            raise PathError("loop orientation must be +1 or -1")

    def reversed(self) -> "Loop":
        return Loop(self.center, self.radius, self.basepoint_angle, -self.orientation)

    def as_arc(self) -> Arc:
        return Arc(self.center, self.radius, self.basepoint_angle,
                   self.basepoint_angle + self.orientation, self.orientation)


Piece = Segment | Arc | Loop


def _angle(turns) -> mpfr:
    return 2 * gmpy2.const_pi() * (mpfr(turns.numerator) / turns.denominator
                                   if isinstance(turns, Fraction) else mpfr(turns))


def _expi(theta) -> mpc:
    return mpc(gmpy2.cos(theta), gmpy2.sin(theta))


def piece_start(p: Piece) -> mpc:
    """Start point (call inside a precision scope)."""
    if isinstance(p, Segment):
        return to_big(p.start)
    arc = p.as_arc() if isinstance(p, Loop) else p
    return to_big(arc.center) + to_big(arc.radius).real * _expi(_angle(arc.start_angle))


def piece_end(p: Piece) -> mpc:
    if isinstance(p, Segment):
        return to_big(p.end)
    if isinstance(p, Loop):
        return piece_start(p)
    return to_big(p.center) + to_big(p.radius).real * _expi(_angle(p.end_angle))


@dataclass(frozen=True)
class PlanePath:
    pieces: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))

    def reversed(self) -> "PlanePath":
        return PlanePath(tuple(p.reversed() for p in reversed(self.pieces)))

    def start(self, ctx: PrecisionContext) -> mpc:
        with ctx.scope():
            return piece_start(self.pieces[0])

    def end(self, ctx: PrecisionContext) -> mpc:
        with ctx.scope():
            return piece_end(self.pieces[-1])

    def is_closed(self, ctx: PrecisionContext) -> bool:
        if not self.pieces:
            return True
        with ctx.scope():
            return abs(self.start(ctx) - self.end(ctx)) <= _slack(ctx)

    def check_chain(self, ctx: PrecisionContext):
        with ctx.scope():
            for a, b in zip(self.pieces, self.pieces[1:]):
                gap = abs(piece_end(a) - piece_start(b))
                if gap > _slack(ctx):
                    raise PathError(f"pieces {a} and {b} do not join (gap {float(gap):.2e})")


def _slack(ctx: PrecisionContext) -> mpfr:
    return mpfr(10) ** (-(ctx.working_digits // 2))


def compose(paths: Iterable[PlanePath], ctx: PrecisionContext | None = None) -> PlanePath:
    """Concatenate paths; their transport matrices multiply in traversal order."""
    ctx = ctx or PrecisionContext()
    paths = [p for p in paths if p.pieces]
    for a, b in zip(paths, paths[1:]):
        with ctx.scope():
            gap = abs(a.end(ctx) - b.start(ctx))
        if gap > _slack(ctx):
            raise PathError(f"cannot compose: endpoint gap {float(gap):.2e}")
    return PlanePath(tuple(p for path in paths for p in path.pieces))


# --------------------------------------------------------------------------
# geometry


def _dist_point_segment(q: mpc, a: mpc, b: mpc) -> mpfr:
    d = b - a
    L2 = d.real ** 2 + d.imag ** 2
    if L2 == 0:
        return abs(q - a)
    t = ((q - a).real * d.real + (q - a).imag * d.imag) / L2
    t = max(mpfr(0), min(mpfr(1), t))
    return abs(q - (a + t * d))


def _dist_point_arc(q: mpc, arc: Arc) -> mpfr:
    m = to_big(arc.center)
    r = to_big(arc.radius).real
    ta, tb = _angle(arc.start_angle), _angle(arc.end_angle)
    span = abs(tb - ta)
    two_pi = 2 * gmpy2.const_pi()
    if abs(q - m) > 0:
        psi = gmpy2.atan2((q - m).imag, (q - m).real)
        t = gmpy2.fmod(arc.orientation * (psi - ta), two_pi)
        if t < 0:
            t += two_pi
        if span >= two_pi or t <= span:
            return abs(abs(q - m) - r)
    else:
        return r
    return min(abs(q - (m + r * _expi(ta))), abs(q - (m + r * _expi(tb))))


def distance_to_piece(q: mpc, p: Piece) -> mpfr:
    if isinstance(p, Segment):
        return _dist_point_segment(q, to_big(p.start), to_big(p.end))
    return _dist_point_arc(q, p.as_arc() if isinstance(p, Loop) else p)


def exclusion_radius(s, singular: Sequence, ctx: PrecisionContext) -> mpfr:
    """1/8 of the distance from ``s`` to its nearest other singular point."""
    with ctx.scope():
        z = to_big(s)
        ds = [abs(z - to_big(t)) for t in singular]
        ds = [d for d in ds if d > _slack(ctx)]
        if not ds:
            return mpfr(1) / 8
        return min(ds) * mpfr(EXCLUSION_FRACTION.numerator) / EXCLUSION_FRACTION.denominator


def validate_path(path: PlanePath, singular: Sequence, ctx: PrecisionContext,
                  allowed_endpoints: Sequence = ()):
    """Raise ExclusionError if a piece enters an exclusion disk.

    Arcs and loops centred at a singular point are exempt for that point;
    segments may end at the points listed in ``allowed_endpoints``.
    """
    path.check_chain(ctx)
    with ctx.scope():
        tiny = _slack(ctx)
        pts = [to_big(s) for s in singular]
        radii = [exclusion_radius(s, singular, ctx) for s in singular]
        allowed = [to_big(a) for a in allowed_endpoints]
        for piece in path.pieces:
            for s, rad in zip(pts, radii):
                if not isinstance(piece, Segment) and abs(to_big(piece.center) - s) <= tiny:
                    r = to_big(piece.radius).real
                    if r <= 0 or r > 4 * rad * (1 + tiny):
                        raise ExclusionError(f"loop radius {float(r):.3e} around {s} is not admissible")
                    continue
                if isinstance(piece, Segment) and any(abs(s - a) <= tiny for a in allowed):
                    a, b = to_big(piece.start), to_big(piece.end)
                    if abs(a - s) <= tiny or abs(b - s) <= tiny:
                        continue
                d = distance_to_piece(s, piece)
                if d < rad * (1 - mpfr(10) ** -20):
                    raise ExclusionError(
                        f"piece {piece} passes within {float(d):.3e} of singular point "
                        f"{complex(s)} (exclusion radius {float(rad):.3e})"
                    )


# --------------------------------------------------------------------------
# standard routes


def standard_basepoint(singular: Sequence, ctx: PrecisionContext):
    """Real point at half the distance from 0 to the nearest nonzero singularity."""
    nonzero = [s for s in singular if not (is_exact(s) and s == 0)]
    with ctx.scope():
        nonzero = [s for s in nonzero if abs(to_big(s)) > _slack(ctx)]
        best = min(nonzero, key=lambda s: abs(to_big(s)))
        if is_exact(best):
            return abs(Fraction(best)) / 2
        return mpc(abs(to_big(best)) / 2)


def _segment_clear(a, b, target, singular, radii, ctx) -> bool:
    seg = Segment(a, b)
    with ctx.scope():
        for s, rad in zip(singular, radii):
            if abs(to_big(s) - to_big(target)) <= _slack(ctx):
                continue
            if distance_to_piece(to_big(s), seg) < rad:
                return False
    return True


def _arc_clear(arc: Arc, target, singular, radii, ctx) -> bool:
    with ctx.scope():
        for s, rad in zip(singular, radii):
            if abs(to_big(s) - to_big(target)) <= _slack(ctx):
                continue
            if distance_to_piece(to_big(s), arc) < rad:
                return False
    return True


def _turns(theta: mpfr) -> mpfr:
    return theta / (2 * gmpy2.const_pi())


def standard_route(basepoint, s, singular: Sequence, ctx: PrecisionContext,
                   side: str = "upper", stop_short: bool = True) -> tuple[PlanePath, object]:
    """Route from ``basepoint`` towards ``s``.

    With ``stop_short`` the route ends on the exclusion circle of ``s``;
    otherwise it ends at ``s`` itself (which must then be an ordinary point).
    Returns the path and the angle (in turns) of its end point seen from
    ``s``.  Straight when admissible; otherwise the semicircle on the
    diameter ``[basepoint, s]`` on the requested side, the other side as
    fallback.
    """
    if side not in ("upper", "lower"):
        raise PathError(f"unknown route side {side!r}")
    radii = [exclusion_radius(t, singular, ctx) for t in singular]
    with ctx.scope():
        b, z = to_big(basepoint), to_big(s)
        rho = exclusion_radius(s, singular, ctx) if stop_short else mpfr(0)
        d = b - z
        if abs(d) == 0:
            raise PathError("route endpoints coincide")
        if abs(d) <= rho:
            raise PathError("basepoint lies inside the exclusion disk of the target")
        p = z + rho * d / abs(d) if stop_short else s
        if _segment_clear(b, p, s, singular, radii, ctx):
            alpha = _turns(gmpy2.atan2(d.imag, d.real))
            return PlanePath((Segment(basepoint, p),)), alpha
        m = (b + z) / 2
        big_r = abs(z - b) / 2
        theta_b = gmpy2.atan2((b - m).imag, (b - m).real)
        delta = 2 * gmpy2.asin(rho / (2 * big_r))
        pi = gmpy2.const_pi()
        options = []
        for o in (1, -1):
            apex = m + big_r * _expi(theta_b + o * pi / 2)
            end = theta_b + o * (pi - delta)
            arc = Arc(m, big_r, _turns(theta_b), _turns(end), o)
            options.append((apex.imag, arc))
        options.sort(key=lambda t: t[0], reverse=(side == "upper"))
        for _, arc in options:
            if _arc_clear(arc, s, singular, radii, ctx):
                q = piece_end(arc)
                alpha = _turns(gmpy2.atan2((q - z).imag, (q - z).real))
                return PlanePath((arc,)), alpha
        raise ExclusionError(f"no admissible semicircle route from {basepoint} to {s}")


def standard_loop(basepoint, s, singular: Sequence, ctx: PrecisionContext,
                  side: str = "upper", winding: int = 1) -> PlanePath:
    """Route to ``s``, ``winding`` turns around it (negative: clockwise), and back."""
    route, alpha = standard_route(basepoint, s, singular, ctx, side)
    rho = exclusion_radius(s, singular, ctx)
    loops = tuple(Loop(s, rho, alpha, 1 if winding > 0 else -1) for _ in range(abs(winding)))
    return PlanePath(route.pieces + loops + route.reversed().pieces)


# --------------------------------------------------------------------------
# stations and legs


@dataclass(eq=False)
class Station:
    center: mpc
    singular: bool
    bases: tuple
    safe_radius: mpfr
    branched: bool

    def __repr__(self):
        return f"Station({complex(self.center)}, singular={self.singular})"


@dataclass(frozen=True, eq=False)
class Leg:
    station: Station
    a: mpc
    b: mpc
    arc: tuple | None = None   # (center, radius, theta_a, theta_b) when centred at the station

    @property
    def centred(self) -> bool:
        return self.arc is not None

    def touches_center(self) -> str | None:
        c = self.station.center
        if self.arc is None and self.station.singular:
            if self.a == c:
                return "start"
            if self.b == c:
                return "end"
        return None

    def reversed(self) -> "Leg":
        arc = None
        if self.arc is not None:
            m, r, ta, tb = self.arc
            arc = (m, r, tb, ta)
        return Leg(self.station, self.b, self.a, arc)


@dataclass
class FieldState:
    """Global solution frames ``P[i] * F_station`` for each operator."""

    station: Station
    P: list
    arg: mpfr
    log: list = field(default_factory=list)


class Continuation:
    """Station ladder shared by one or more operators in the same plane."""

    def __init__(self, ops: Sequence[FuchsianOperator], ctx: PrecisionContext,
                 extra_singular: Sequence = ()):
        self.ops = tuple(ops)
        self.ctx = ctx
        pts = []
        for op in self.ops:
            for s in singular_locations(op, ctx):
                pts.append(s)
        pts.extend(extra_singular)
        with ctx.scope():
            uniq = []
            for s in pts:
                if all(abs(to_big(s) - to_big(t)) > _slack(ctx) for t in uniq):
                    uniq.append(s)
        self.singular = tuple(uniq)
        with ctx.scope():
            self._sing_big = tuple(to_big(s) for s in uniq)
        self._stations: dict = {}
        self._plans: dict = {}
        self._W: dict = {}
        self._memo: dict = {}
        self._lock = threading.RLock()

    # geometry ----------------------------------------------------------
    def singular_at(self, z: mpc):
        for s, sb in zip(self.singular, self._sing_big):
            if abs(z - sb) <= _slack(self.ctx):
                return s
        return None

    def local_radius(self, z: mpc) -> mpfr:
        ds = [abs(z - s) for s in self._sing_big]
        ds = [d for d in ds if d > _slack(self.ctx)]
        return min(ds) if ds else mpfr("inf")

    def exclusion(self, s) -> mpfr:
        return exclusion_radius(s, self.singular, self.ctx)

    def validate(self, path: PlanePath, allowed_endpoints: Sequence = ()):
        validate_path(path, self.singular, self.ctx, allowed_endpoints)

    # stations ----------------------------------------------------------
    def station(self, center: mpc, bases: Sequence[FrobeniusBasis] | None = None) -> Station:
        with self._lock:
            s = self.singular_at(center)
            if s is not None:
                center = self._sing_big[self.singular.index(s)]
            key = center if bases is None else (center, tuple(id(b) for b in bases))
            st = self._stations.get(key)
            if st is not None:
                return st
            ctx = self.ctx
            with ctx.scope():
                s = self.singular_at(center)
                point = s if s is not None else center
                radius = self.local_radius(center)
                if bases is None:
                    bases = tuple(frobenius_basis(op, point, ctx, radius=radius) for op in self.ops)
                branched = any(b.has_logs or any(Fraction(e).denominator != 1 for e in b.exponents)
                               for b in bases)
                safe = radius * mpfr(SAFETY_RATIO.numerator) / SAFETY_RATIO.denominator
                st = Station(to_big(point), s is not None, tuple(bases), safe, branched)
            self._stations[key] = st
            return st

    # planning ----------------------------------------------------------
    def plan(self, piece: Piece) -> list[Leg]:
        with self._lock:
            got = self._plans.get(piece)
            if got is not None:
                return got
            rev = self._plans.get(piece.reversed())
            if rev is not None:
                legs = [leg.reversed() for leg in reversed(rev)]
            else:
                with self.ctx.scope():
                    legs = self._plan_piece(piece)
            self._plans[piece] = legs
            return legs

    def _plan_piece(self, piece: Piece) -> list[Leg]:
        if isinstance(piece, Loop):
            piece = piece.as_arc()
        if isinstance(piece, Arc):
            m = to_big(piece.center)
            r = to_big(piece.radius).real
            st = self.station(m)
            if r <= st.safe_radius * (1 + mpfr(10) ** -30):
                ta, tb = _angle(piece.start_angle), _angle(piece.end_angle)
                return [Leg(st, piece_start(piece), piece_end(piece), (m, r, ta, tb))]
            ta, tb = _angle(piece.start_angle), _angle(piece.end_angle)
            o = piece.orientation

            def point(s):
                return m + r * _expi(ta + o * s / r)

            def span(safe):
                if safe >= 2 * r:
                    return 2 * gmpy2.const_pi() * r
                return 2 * r * gmpy2.asin(safe / (2 * r))

            return self._step(point, span, abs(tb - ta) * r, piece_start(piece), piece_end(piece))
        a, b = to_big(piece.start), to_big(piece.end)
        length = abs(b - a)
        if length == 0:
            return []
        unit = (b - a) / length

        def point(s):
            return a + unit * s

        sa, sb = self.singular_at(a), self.singular_at(b)
        # endpoints on singular points are snapped onto the station centres
        if sa is not None:
            a = self.station(a).center
        if sb is not None:
            b = self.station(b).center
        length = abs(b - a)
        unit = (b - a) / length
        lo, hi = mpfr(0), length
        head, tail = [], []
        shrink = 1 - mpfr(1) / 1000
        if sa is not None:
            st = self.station(a)
            t1 = min(st.safe_radius * shrink, length / 2 if sb is not None else length)
            head = [Leg(st, a, point(t1) if t1 < length else b)]
            lo = t1
        if sb is not None:
            st = self.station(b)
            t2 = max(length - st.safe_radius * shrink, lo)
            tail = [Leg(st, point(t2) if t2 > 0 else a, b)]
            hi = t2
        if head and tail and lo >= hi:
            tail = [Leg(tail[0].station, head[0].b, b)]
            return head + tail
        middle = []
        if hi > lo:
            middle = self._step(point, lambda safe: safe, hi - lo, point(lo), point(hi), offset=lo)
        return head + middle + tail

    def _step(self, point, span, length, za, zb, offset=0) -> list[Leg]:
        legs = []
        s = mpfr(0)
        z = za
        end = length
        while True:
            # a quarter keeps each switch point well inside both stations
            c_s = min(s + self.local_radius(z) / 4, (s + end) / 2)
            c = point(offset + c_s)
            st = self.station(c)
            e = c_s + span(st.safe_radius)
            if e >= end:
                legs.append(Leg(st, z, zb))
                return legs
            ze = point(offset + e)
            legs.append(Leg(st, z, ze))
            s, z = e, ze
            if len(legs) > 100000:
                raise PathError("station ladder does not terminate")

    # traversal ---------------------------------------------------------
    def _values(self, st: Station, i: int, z: mpc, arg) -> list:
        key = (id(st), i, z) if not st.branched else None
        if key is not None and key in self._W:
            return self._W[key]
        r = self.ops[i].order
        W = evaluate_basis(st.bases[i], z, arg=arg if st.branched else None,
                           derivatives=r - 1, tolerance=self.ctx.eps * 10 ** 10)
        if key is not None:
            with self._lock:
                self._W[key] = W
        return W

    def _arg_at(self, st: Station, z: mpc, ref) -> mpfr:
        u = z - st.center
        if u == 0:
            return ref
        return continuous_arg(u, ref)

    def enter(self, state: FieldState, leg: Leg):
        new = leg.station
        old = state.station
        if new is old:
            return
        z = leg.a
        tol = 1 + mpfr(10) ** -20
        if abs(z - old.center) > old.safe_radius * tol or abs(z - new.center) > new.safe_radius * tol:
            raise PathError(f"switch point {complex(z)} is not shared by stations {old} and {new}")
        if z == old.center and old.singular:
            raise PathError("cannot leave a singular station from its centre")
        arg_old = self._arg_at(old, z, state.arg)
        if z == new.center and new.singular:
            raise PathError("cannot enter a singular station at its own centre")
        u = (leg.b if z == new.center else z) - new.center
        arg_new = gmpy2.atan2(u.imag, u.real)
        P = []
        for i in range(len(self.ops)):
            W_old = self._values(old, i, z, arg_old)
            W_new = self._values(new, i, z, arg_new)
            T = mat_mul(W_old, mat_inv(W_new))
            P.append(mat_mul(state.P[i], T))
        state.P = P
        state.station = new
        state.arg = arg_new

    def advance(self, state: FieldState, leg: Leg):
        c = state.station.center
        if leg.arc is not None:
            _, _, ta, tb = leg.arc
            state.arg = state.arg + (tb - ta)
        elif leg.b != c:
            state.arg = self._arg_at(state.station, leg.b, state.arg)

    def initial_state(self, z0: mpc, frames: Sequence, station: Station | None = None,
                      arg=None) -> FieldState:
        with self.ctx.scope():
            st = station
            if st is None:
                sp = self.singular_at(z0)
                st = self.station(z0) if sp is None else None
                if st is None:
                    raise PathError("paths cannot start at a singular point")
            if arg is None:
                u = z0 - st.center
                arg = gmpy2.atan2(u.imag, u.real) if u != 0 else mpfr(0)
            return FieldState(st, [list(map(list, f)) for f in frames], mpfr(arg))

    def traverse(self, path: PlanePath, state: FieldState,
                 on_leg: Callable | None = None) -> FieldState:
        with self.ctx.scope():
            for piece in path.pieces:
                for leg in self.plan(piece):
                    self.enter(state, leg)
                    if on_leg is not None:
                        on_leg(leg, state)
                    self.advance(state, leg)
        return state

    def frame_at(self, state: FieldState, z: mpc, i: int, target: Station, target_arg=None) -> list:
        """Matrix ``T`` with (tracked frame i at z) = T * F_target(z)."""
        with self.ctx.scope():
            arg = self._arg_at(state.station, z, state.arg)
            W_f = self._values(state.station, i, z, arg)
            if target_arg is None:
                u = z - target.center
                target_arg = gmpy2.atan2(u.imag, u.real)
            W_t = self._values(target, i, z, target_arg)
            return mat_mul(mat_mul(state.P[i], W_f), mat_inv(W_t))


# --------------------------------------------------------------------------
# public operations


@dataclass(frozen=True)
class TransitionMatrix:
    matrix: list
    from_basis: str
    to_basis: str
    path: PlanePath
    stations: int = 0

    @property
    def det(self):
        bits = max((x.precision[0] for row in self.matrix for x in row if isinstance(x, mpc)), default=53)
        with gmpy2.context(gmpy2.get_context(), precision=bits, real_prec=bits, imag_prec=bits):
            return det(self.matrix)

    def distance_to_integers(self) -> mpfr:
        return max(abs(x - gmpy2.rint(mpc(x).real)) for row in self.matrix for x in row)


def _basis_label(b: FrobeniusBasis) -> str:
    return f"frobenius@{b.base_point}"


def _continuation_for(op, ctx, cache):
    if cache is not None:
        return cache
    return Continuation([op], ctx)


def transport(op: FuchsianOperator, basis: FrobeniusBasis, path: PlanePath,
              ctx: PrecisionContext, continuation: Continuation | None = None,
              branch=None) -> TransitionMatrix:
    """Continue ``basis`` along ``path``.

    Returns ``T`` with (continued basis) = ``T * B_end`` where ``B_end`` is
    ``basis`` itself when the path is closed and the Taylor basis at the end
    point otherwise.  A tail-bound failure triggers one retry at doubled
    truncation order.
    """
    try:
        return _transport(op, basis, path, ctx, continuation, branch)
    except TruncationError:
        bigger = ctx.replace(truncation_order=2 * ctx.truncation_order)
        basis2 = frobenius_basis(op, basis.base_point, bigger, exact=basis.exact)
        try:
            return _transport(op, basis2, path, bigger, None, branch)
        except TruncationError as exc:
            raise TruncationError(f"transport failed after doubling truncation order: {exc}") from exc


def _transport(op, basis, path, ctx, continuation, branch):
    if not path.pieces:
        return TransitionMatrix(identity(op.order, mpc(1)), _basis_label(basis), _basis_label(basis), path)
    cont = continuation or Continuation([op], ctx)
    key = (op.key(), id(basis), path)
    with cont._lock:
        if key in cont._memo:
            return cont._memo[key]
    cont.validate(path)
    with ctx.scope():
        z0 = path.start(ctx)
        start = cont.station(to_big(basis.base_point), bases=(basis,))
        state = cont.initial_state(z0, [identity(op.order, mpc(1))], station=start, arg=branch)
        arg0 = state.arg
        count = [0]
        cont.traverse(path, state, on_leg=lambda leg, st: count.__setitem__(0, count[0] + 1))
        z1 = path.end(ctx)
        if path.is_closed(ctx):
            target, target_arg, label = start, arg0, _basis_label(basis)
        else:
            target = cont.station(z1) if cont.singular_at(z1) is None else None
            if target is None:
                raise PathError("open transport cannot end at a singular point")
            target_arg, label = None, f"taylor@{complex(z1)}"
        T = cont.frame_at(state, z1, 0, target, target_arg)
        result = TransitionMatrix(T, _basis_label(basis), label, path, count[0])
    with cont._lock:
        cont._memo[key] = result
    return result


def monodromy(op: FuchsianOperator, basis: FrobeniusBasis, singularity, basepoint,
              route: str, ctx: PrecisionContext,
              continuation: Continuation | None = None) -> TransitionMatrix:
    """Monodromy of ``basis`` along the standard loop around ``singularity``."""
    cont = continuation or Continuation([op], ctx)
    path = standard_loop(basepoint, singularity, cont.singular, ctx, side=route)
    return transport(op, basis, path, ctx, cont)


def homotopy_check(op: FuchsianOperator, basis: FrobeniusBasis, p1: PlanePath, p2: PlanePath,
                   ctx: PrecisionContext, continuation: Continuation | None = None) -> bool:
    """True iff transport along ``p1`` and ``p2`` agrees within tolerance."""
    with ctx.scope():
        if abs(p1.start(ctx) - p2.start(ctx)) > _slack(ctx) or abs(p1.end(ctx) - p2.end(ctx)) > _slack(ctx):
            raise PathError("homotopy_check needs paths with equal endpoints")
    cont = continuation or Continuation([op], ctx)
    t1 = transport(op, basis, p1, ctx, cont).matrix
    t2 = transport(op, basis, p2, ctx, cont).matrix
    with ctx.scope():
        scale = max(max_abs_entry(t1), mpfr(1))
        return max_abs_entry(mat_sub(t1, t2)) <= ctx.tol * scale


# --------------------------------------------------------------------------
# contour files


def _read_point(x, resolve):
    if isinstance(x, str) and "=" in x:
        return resolve(x)
    if isinstance(x, (list, tuple)) and len(x) == 2:
        re, im = (Fraction(str(v)) for v in x)
        return mpc(mpfr(re.numerator) / re.denominator, mpfr(im.numerator) / im.denominator) if im else re
    return Fraction(str(x))


def path_from_json(data: list, resolve: Callable[[str], object], singular: Sequence,
                   ctx: PrecisionContext, basepoint=None) -> PlanePath:
    """Build a path from contour-file pieces.

    Piece kinds: ``segment`` (start, end), ``arc`` (center, radius,
    start_angle, end_angle, orientation; angles in turns), ``loop`` (center,
    optional radius and basepoint_angle) and ``standard-loop`` (singularity,
    optional side) which expands to route, loop and return from the
    basepoint.  Points may be rational strings, ``[re, im]`` pairs or
    singularity names such as ``"lambda=varphi"``.
    """
    pieces: list = []
    for item in data:
        kind = item.get("type")
        try:
            if kind == "segment":
                pieces.append(Segment(_read_point(item["start"], resolve), _read_point(item["end"], resolve)))
            elif kind == "arc":
                pieces.append(Arc(_read_point(item["center"], resolve), Fraction(str(item["radius"])),
                                  Fraction(str(item["start_angle"])), Fraction(str(item["end_angle"])),
                                  int(item.get("orientation", 1))))
            elif kind == "loop":
                c = _read_point(item["center"], resolve)
                rad = Fraction(str(item["radius"])) if "radius" in item else exclusion_radius(c, singular, ctx)
                pieces.append(Loop(c, rad, Fraction(str(item.get("basepoint_angle", 0))),
                                   int(item.get("orientation", 1))))
            elif kind == "standard-loop":
                if basepoint is None:
                    raise PathError("standard-loop pieces need a basepoint")
                s = _read_point(item["singularity"], resolve)
                pieces.extend(standard_loop(basepoint, s, singular, ctx,
                                            side=item.get("side", "upper"),
                                            winding=int(item.get("winding", 1))).pieces)
            else:
                raise PathError(f"unknown piece type {kind!r}")
        except (KeyError, ValueError, ZeroDivisionError) as exc:
            if isinstance(exc, PathError):
                raise
            raise PathError(f"malformed piece {item}: {exc}") from exc
    return PlanePath(tuple(pieces))
