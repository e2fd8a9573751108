"""Pairing matrices, identity evaluation and recovery of Gamma by lattice reduction."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import gmpy2
from gmpy2 import mpfr, mpz

from .numerics import PrecisionContext, format_big, kron, mat_mul, mat_sub, to_big

SEPARATION_MIN = 10 ** 10
DEFAULT_DIGITS_USED = 40
DEFAULT_MAX_DEN = 4


def sigma(n: int) -> list[list[int]]:
    """``[[0, I], [-I, 0]]`` of size n."""
    if n % 2:
        raise ValueError("Sigma_n needs even n")
    h = n // 2
    return [[(1 if j == i + h else -1 if i == j + h else 0) for j in range(n)] for i in range(n)]


def sigma_pair(m: int, n: int) -> list[list[int]]:
    """``Sigma_m x Sigma_n``."""
    return kron(sigma(m), sigma(n))


def pairing_row(G: Sequence[int]) -> list:
    """``G^T Sigma_{2,2}``."""
    s = sigma_pair(2, 2)
    return [sum(G[i] * s[i][j] for i in range(4)) for j in range(4)]


def tensor_vector(g1: Sequence[int], g2: Sequence[int]) -> list[int]:
    return [a * b for a in g1 for b in g2]


# --------------------------------------------------------------------------
# identity specifications


@dataclass(frozen=True)
class IdentityTerm:
    G: tuple
    contour: object          # ContourSpec or the name of a built-in contour


@dataclass(frozen=True)
class IdentitySpec:
    name: str
    phi: object
    terms: tuple
    gamma: tuple | None = None
    detour: str = "upper"

    @classmethod
    def builtin(cls, name: str, phi, ctx: PrecisionContext, detour: str = "upper") -> "IdentitySpec":
        from .contours import builtin_identity

        b = builtin_identity(name, phi, ctx, detour)
        term = IdentityTerm(tuple(tensor_vector(b.g1, b.g2)), b.contour)
        return cls(name, b.phi, (term,), tuple(Fraction(x) for x in b.gamma), detour)

    def without_gamma(self) -> "IdentitySpec":
        return IdentitySpec(self.name, self.phi, self.terms, None, self.detour)

    @classmethod
    def from_json(cls, data: dict, ctx: PrecisionContext, detour: str = "upper") -> "IdentitySpec":
        from .contours import ContourSpec, builtin_identity
        from .hv_elliptic import elliptic_field, elliptic_singular_set, parse_phi
        from .transport import path_from_json, standard_basepoint

        try:
            phi = parse_phi(str(data["phi"]))
            raw_terms = data["terms"]
        except (KeyError, ValueError) as exc:
            raise ValueError(f"malformed identity spec: {exc}") from exc
        gamma = data.get("gamma")
        if gamma is not None:
            gamma = tuple(Fraction(str(x)) for x in gamma)
            if len(gamma) != 4:
                raise ValueError("gamma must have 4 entries")
        names = elliptic_singular_set(phi, ctx)
        cont, _ = elliptic_field([1, phi], ctx)
        terms = []
        for t in raw_terms:
            g = t.get("G")
            if isinstance(g, dict):
                G = tuple(tensor_vector(g["g1"], g["g2"]))
            elif isinstance(g, list) and len(g) == 4:
                G = tuple(int(x) for x in g)
            else:
                raise ValueError(f"term needs G as 4 integers or {{g1, g2}}: {t}")
            c = t.get("contour")
            if isinstance(c, str):
                contour = builtin_identity(c, phi, ctx, detour).contour
            elif isinstance(c, dict):
                base = standard_basepoint(cont.singular, ctx)
                path = path_from_json(c["pieces"], names.resolve, cont.singular, ctx, basepoint=base)
                ends = c.get("endpoints")
                if ends is not None:
                    ends = tuple(names.resolve(e) if isinstance(e, str) and "=" in e else Fraction(str(e))
                                 for e in ends)
                contour = ContourSpec(c.get("kind", "open"), path, ends, c.get("name", ""))
            else:
                raise ValueError(f"term needs a contour name or inline contour: {t}")
            terms.append(IdentityTerm(G, contour))
        return cls(str(data.get("name", "inline")), phi, tuple(terms), gamma, detour)

    @classmethod
    def load(cls, path, ctx: PrecisionContext, detour: str = "upper") -> "IdentitySpec":
        return cls.from_json(json.loads(Path(path).read_text()), ctx, detour)


def identity_lhs(gamma: Sequence, phi, ctx: PrecisionContext, pi=None):
    """``gamma^T Sigma_4 Pi(phi)``."""
    from .hv_threefold import pi_vector

    if all(g == 0 for g in gamma):
        with ctx.scope():
            return to_big(0)
    pi = pi if pi is not None else pi_vector(phi, ctx)
    s = sigma(4)
    with ctx.scope():
        row = [sum(Fraction(gamma[i]) * s[i][j] for i in range(4)) for j in range(4)]
        return sum(to_big(r) * p for r, p in zip(row, pi) if r != 0)


def identity_rhs(spec: IdentitySpec, ctx: PrecisionContext):
    """Sum of the paired contour integrals; returns the value and per-term results."""
    from .contours import integrate_spec

    results = []
    with ctx.scope():
        total = to_big(0)
    for term in spec.terms:
        r = integrate_spec(term.contour, spec.phi, term.G, ctx)
        results.append(r)
        with ctx.scope():
            total = total + r.value
    return total, results


def verify_identity(spec: IdentitySpec, ctx: PrecisionContext, rhs=None) -> dict:
    if spec.gamma is None:
        raise ValueError(f"identity {spec.name!r} has no claimed gamma")
    lhs = identity_lhs(spec.gamma, spec.phi, ctx)
    certs = []
    if rhs is None:
        rhs, results = identity_rhs(spec, ctx)
        certs = [{"node_count": r.node_count, "error_estimate": format_big(r.error_estimate, 3),
                  "legs": r.legs} for r in results]
    with ctx.scope():
        scale = max(abs(lhs), abs(rhs))
        residual = abs(lhs - rhs) / scale if scale else mpfr(0)
    return {
        "name": spec.name,
        "phi": str(spec.phi),
        "gamma": [str(g) for g in spec.gamma],
        "detour": spec.detour,
        "lhs": format_big(lhs, 40),
        "rhs": format_big(rhs, 40),
        "residual": format_big(residual, 3),
        "certificates": certs,
        "_residual": residual,
        "_rhs": rhs,
    }


# --------------------------------------------------------------------------
# lattice reduction


def lll_reduce(basis: Sequence[Sequence[int]], delta: Fraction = Fraction(3, 4)) -> list[list[int]]:
    """LLL-reduced basis of the integer row lattice (exact rational Gram-Schmidt)."""
    b = [[int(x) for x in row] for row in basis]
    n = len(b)
    if n == 0:
        return b

    def dot(u, v):
        return sum(x * y for x, y in zip(u, v))

    def gram_schmidt():
        bstar, mu, norms = [], [[Fraction(0)] * n for _ in range(n)], []
        for i in range(n):
            v = [Fraction(x) for x in b[i]]
            for j in range(i):
                mu[i][j] = Fraction(dot(b[i], bstar[j])) / norms[j] if norms[j] else Fraction(0)
                v = [x - mu[i][j] * y for x, y in zip(v, bstar[j])]
            bstar.append(v)
            norms.append(dot(v, v))
        return mu, norms

    mu, norms = gram_schmidt()
    k = 1
    while k < n:
        for j in range(k - 1, -1, -1):
            q = round(mu[k][j])
            if q:
                b[k] = [x - q * y for x, y in zip(b[k], b[j])]
                mu, norms = gram_schmidt()
        if norms[k] >= (delta - mu[k][k - 1] ** 2) * norms[k - 1]:
            k += 1
        else:
            b[k], b[k - 1] = b[k - 1], b[k]
            mu, norms = gram_schmidt()
            k = max(k - 1, 1)
    return b


def _norm(row: Sequence[int]) -> mpfr:
    return gmpy2.sqrt(mpfr(sum(mpz(x) * x for x in row)))


@dataclass(frozen=True)
class GammaResult:
    gamma: tuple | None
    residual: mpfr | None
    status: str                          # "found", "ambiguous" or "none"
    lattice_certificate: dict = field(default_factory=dict)

    def report(self) -> dict:
        return {
            "gamma": None if self.gamma is None else [str(g) for g in self.gamma],
            "residual": None if self.residual is None else format_big(self.residual, 3),
            "status": self.status,
            "lattice_certificate": self.lattice_certificate,
        }


def _scaled(x, scale: mpz) -> tuple[int, int]:
    return int(gmpy2.rint(x.real * scale)), int(gmpy2.rint(x.imag * scale))


def find_gamma(rhs, pi: Sequence, max_den: int = DEFAULT_MAX_DEN,
               digits_used: int = DEFAULT_DIGITS_USED, ctx: PrecisionContext | None = None) -> GammaResult:
    """Search ``gamma`` with ``gamma^T Sigma_4 Pi = rhs`` by LLL on a 5-dimensional lattice.

    Rows ``[e_i | round(K Re v_i) | round(K Im v_i)]`` with ``K = 10^digits_used``
    and ``v = ((Sigma_4 Pi)_1..4, rhs)``.  A relation ``sum n_i v_i + n_5 rhs = 0``
    gives ``gamma_i = -n_i / n_5``.  It is accepted when its norm stays below
    ``10^(digits_used/4)``, ``n_5 != 0``, the denominators are at most ``max_den``
    and the next reduced vector is at least ``10^10`` times longer.
    """
    ctx = ctx or PrecisionContext(max(digits_used + 20, 40), 8, 10.0 ** -(digits_used // 2))
    s = sigma(4)
    with ctx.scope():
        v = [sum(s[i][j] * to_big(pi[j]) for j in range(4) if s[i][j]) for i in range(4)]
        v.append(to_big(rhs))
        top = max(abs(x) for x in v)
        if top == 0:
            raise ValueError("all lattice values vanish")
        # scale so that the largest entry is about one
        K = mpz(10) ** digits_used / top
        rows = []
        for i, x in enumerate(v):
            re, im = _scaled(x, K)
            rows.append([1 if j == i else 0 for j in range(5)] + [re, im])
    reduced = lll_reduce(rows)
    ranked = sorted(reduced, key=lambda r: sum(x * x for x in r))
    best, nxt = ranked[0], ranked[1]
    with ctx.scope():
        n_best, n_next = _norm(best), _norm(nxt)
        separation = n_next / n_best
        threshold = mpfr(10) ** (mpfr(digits_used) / 4)
    cert = {
        "relation": best[:5],
        "relation_norm": format_big(n_best, 6),
        "next_norm": format_big(n_next, 6),
        "separation": format_big(separation, 6),
        "digits_used": digits_used,
        "max_denominator": max_den,
        "_separation": separation,
    }
    n = best[:5]
    if n_best > threshold or n[4] == 0:
        return GammaResult(None, None, "none", cert)
    gamma = tuple(Fraction(-n[i], n[4]) for i in range(4))
    if math.lcm(*(g.denominator for g in gamma)) > max_den:
        return GammaResult(None, None, "none", cert)
    with ctx.scope():
        lhs = sum(to_big(g) * x for g, x in zip(gamma, v[:4]) if g != 0)
        residual = abs(lhs - v[4]) / max(abs(v[4]), abs(lhs), mpfr(10) ** -ctx.working_digits)
    if separation < SEPARATION_MIN:
        return GammaResult(gamma, residual, "ambiguous", cert)
    return GammaResult(gamma, residual, "found", cert)


# --------------------------------------------------------------------------
# vanishing cycles


def invariant_vector(mu: Sequence[Sequence[int]]) -> tuple[int, int]:
    """Primitive generator of ``ker(mu - I)``, first nonzero entry positive."""
    m = [[Fraction(x) for x in row] for row in mu]
    if len(m) != 2 or any(len(r) != 2 for r in m):
        raise ValueError("invariant_vector expects a 2x2 matrix")
    a, b = m[0][0] - 1, m[0][1]
    c, d = m[1][0], m[1][1] - 1
    if a == b == c == d == 0:
        raise ValueError("mu is the identity: the invariant space is not one-dimensional")
    if a * d - b * c != 0:
        raise ValueError("mu - I is invertible: no invariant vector")
    x, y = (-b, a) if (a, b) != (0, 0) else (-d, c)
    den = math.lcm(x.denominator, y.denominator)
    xi, yi = int(x * den), int(y * den)
    g = math.gcd(xi, yi)
    xi, yi = xi // g, yi // g
    if xi < 0 or (xi == 0 and yi < 0):
        xi, yi = -xi, -yi
    return xi, yi


def vanishing_cycle_branch_relation(g1: Sequence, g2: Sequence, M: Sequence[Sequence],
                                    max_den: int = 1000) -> bool:
    """True iff ``g2 = M g1`` exactly once ``M`` is rationally reconstructed."""
    exact = [[_reconstruct(x, max_den) for x in row] for row in M]
    if any(x is None for row in exact for x in row):
        return False
    image = [sum(row[j] * Fraction(g1[j]) for j in range(len(g1))) for row in exact]
    return image == [Fraction(x) for x in g2]


def _reconstruct(x, max_den: int):
    if isinstance(x, (int, Fraction)):
        return Fraction(x)
    z = to_big(x)
    if abs(z.imag) > mpfr(10) ** -20:
        return None
    f = Fraction(int(gmpy2.rint(z.real * 2 ** 64)), 2 ** 64).limit_denominator(max_den)
    if abs(z.real - mpfr(f.numerator) / f.denominator) > mpfr(10) ** -20:
        return None
    return f


def symplectic_defect(M: Sequence[Sequence], ctx: PrecisionContext) -> mpfr:
    with ctx.scope():
        s = [[to_big(x) for x in row] for row in sigma(len(M))]
        Mt = [list(r) for r in zip(*M)]
        d = mat_sub(mat_mul(mat_mul(Mt, s), M), s)
        return max(abs(x) for row in d for x in row)
