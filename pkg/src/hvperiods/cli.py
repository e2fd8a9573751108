"""Command-line driver: monodromy tables, identities, Gamma search and the SL2(Z) check."""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import gmpy2
from gmpy2 import mpc

from . import __version__
from .contours import BUILTIN_NAMES, ContourError, QuadratureFailure
from .fuchsian import INFINITY, OperatorError, TruncationError
from .hv_elliptic import (
    _close,
    elliptic_field,
    elliptic_singular_set,
    loop_monodromies,
    matrix_report,
    parse_phi,
    sl2z_conjecture_check,
)
from .numerics import PrecisionContext, format_big, is_exact, kron
from .transport import PathError

CACHE_ENV = "HVPERIODS_CACHE_DIR"
CONTROL_NAME = "control-transcendental"

EXIT_OK = 0
EXIT_COMPUTATION = 1
EXIT_CONFIG = 2
EXIT_VIOLATION = 3


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    phi: str = "1/64"
    digits: int = 120
    order: int = 400
    detour: str = "upper"
    out: str | None = None
    cache_dir: str | None = None
    contour_file: str | None = None
    max_denominator: int = 4
    digits_used: int = 40
    extra: dict = field(default_factory=dict)

    def validate(self) -> "RunConfig":
        if self.digits < 30:
            raise ConfigError("--digits must be at least 30")
        if self.order < 20:
            raise ConfigError("--order must be at least 20")
        if self.detour not in ("upper", "lower"):
            raise ConfigError("--detour must be upper or lower")
        if self.max_denominator < 1:
            raise ConfigError("--max-denominator must be positive")
        for p in self.phi_list():
            try:
                parse_phi(p)
            except (ValueError, ZeroDivisionError) as exc:
                raise ConfigError(f"invalid phi {p!r}: {exc}") from exc
        if self.contour_file is not None and not Path(self.contour_file).is_file():
            raise ConfigError(f"contour file {self.contour_file} not found")
        return self

    def phi_list(self) -> list[str]:
        return [p for p in self.phi.split(",") if p.strip()] if self.phi else []

    def context(self) -> PrecisionContext:
        return PrecisionContext(self.digits, self.order, 10.0 ** -(self.digits // 3))

    def echo(self) -> dict:
        d = asdict(self)
        d.pop("extra")
        d.update(self.extra)
        return d


# --------------------------------------------------------------------------
# disk cache


class DiskCache:
    """Numeric results keyed by operator data, phi and precision; stored bit-exactly."""

    def __init__(self, root: str | None):
        self.root = Path(root) if root else None
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(*parts) -> str:
        return hashlib.sha256(json.dumps([str(p) for p in parts]).encode()).hexdigest()

    def get(self, key: str):
        if self.root is None:
            return None
        path = self.root / f"{key}.json"
        if not path.is_file():
            return None
        return _decode(json.loads(path.read_text()))

    def put(self, key: str, value):
        if self.root is None:
            return
        path = self.root / f"{key}.json"
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(_encode(value)))
        os.replace(tmp, path)


def _encode(x):
    if isinstance(x, (list, tuple)):
        return [_encode(v) for v in x]
    if isinstance(x, dict):
        return {k: _encode(v) for k, v in x.items()}
    if isinstance(x, (type(mpc(0)), type(gmpy2.mpfr(0)))):
        return {"big": gmpy2.to_binary(x).hex()}
    if isinstance(x, Fraction):
        return {"q": str(x)}
    return x


def _decode(x):
    if isinstance(x, list):
        return [_decode(v) for v in x]
    if isinstance(x, dict):
        if set(x) == {"big"}:
            return gmpy2.from_binary(bytes.fromhex(x["big"]))
        if set(x) == {"q"}:
            return Fraction(x["q"])
        return {k: _decode(v) for k, v in x.items()}
    return x


def _phi_label(phi) -> str:
    return str(phi) if is_exact(phi) else format_big(phi, 30)


def _point_names(phi, point, ctx) -> list[str]:
    names = elliptic_singular_set(phi, ctx)
    out = [k for k, v in names.locations.items() if v is not None and v != INFINITY and _close(v, point)]
    return out or [f"lambda={_phi_label(point)}"]


# --------------------------------------------------------------------------
# commands


def cmd_monodromy(config: RunConfig, cache: DiskCache) -> tuple[dict, int]:
    """Monodromies of ``omega(lambda, 1) x omega(lambda, phi)`` around every finite singularity."""
    ctx = config.context()
    phi = parse_phi(config.phi)
    cont, frames = elliptic_field([1, phi], ctx)
    key = DiskCache.key("monodromy", [op.key() for op in cont.ops], phi, config.digits, config.order,
                        config.detour)
    mons = cache.get(key)
    if mons is None:
        raw = loop_monodromies(cont, frames, ctx, side=config.detour)
        mons = [[s, m] for s, m in raw.items()]
        cache.put(key, mons)
    entries = []
    ok = True
    with ctx.scope():
        for s, (left, right) in mons:
            s = Fraction(s) if isinstance(s, (int, Fraction)) else s
            rl, rr = matrix_report(left, ctx), matrix_report(right, ctx)
            rt = matrix_report(kron(left, right), ctx)
            good = all(r["_dist"] < 1e-20 and r["_det_dev"] < 1e-30 for r in (rl, rr))
            ok = ok and good
            entries.append({
                "singularity": _point_names(phi, s, ctx),
                "location": _phi_label(s),
                "left": rl["integer_matrix"],
                "right": rr["integer_matrix"],
                "tensor": rt["integer_matrix"],
                "max_distance_to_integers": format_big(max(rl["_dist"], rr["_dist"]), 3),
                "det_minus_one": format_big(max(rl["_det_dev"], rr["_det_dev"]), 3),
                "integral_unimodular": good,
            })
    result = {
        "phi": _phi_label(phi),
        "basis": "omega(lambda,1) x omega(lambda,phi) in the integral frame (2 pi i, 0; -log phi, 3)",
        "convention": "omega -> mu omega after one anticlockwise turn; loops start at the standard basepoint",
        "route": config.detour,
        "monodromies": entries,
        "all_integral": ok,
    }
    return result, EXIT_OK if ok else EXIT_VIOLATION


def _identity_specs(config: RunConfig, name: str | None, ctx):
    from .relations import IdentitySpec

    if config.contour_file:
        return IdentitySpec.load(config.contour_file, ctx, config.detour)
    if name not in BUILTIN_NAMES:
        raise ConfigError(f"unknown identity {name!r}; choose from {', '.join(BUILTIN_NAMES)}")
    return IdentitySpec.builtin(name, config.phi, ctx, config.detour)


def _cached_rhs(spec, config: RunConfig, cache: DiskCache, ctx):
    from .relations import identity_rhs

    key = DiskCache.key("rhs", spec.name, spec.phi, config.digits, config.order, config.detour,
                        [t.G for t in spec.terms], config.contour_file or "")
    got = cache.get(key)
    if got is not None:
        return got[0], got[1]
    value, results = identity_rhs(spec, ctx)
    certs = [{"node_count": r.node_count, "error_estimate": format_big(r.error_estimate, 3), "legs": r.legs}
             for r in results]
    cache.put(key, [value, certs])
    return value, certs


def _cached_pi(phi, config: RunConfig, cache: DiskCache, ctx):
    from .hv_threefold import pi_vector

    key = DiskCache.key("pi", phi, config.digits, config.order)
    got = cache.get(key)
    if got is None:
        got = pi_vector(phi, ctx)
        cache.put(key, got)
    return got


def cmd_identity(config: RunConfig, cache: DiskCache, name: str | None) -> tuple[dict, int]:
    from .relations import identity_lhs

    ctx = config.context()
    spec = _identity_specs(config, name, ctx)
    if spec.gamma is None:
        raise ConfigError("the identity spec carries no gamma; use the gamma command")
    rhs, certs = _cached_rhs(spec, config, cache, ctx)
    pi = _cached_pi(spec.phi, config, cache, ctx)
    lhs = identity_lhs(spec.gamma, spec.phi, ctx, pi=pi)
    with ctx.scope():
        scale = max(abs(lhs), abs(rhs))
        residual = abs(lhs - rhs) / scale if scale else gmpy2.mpfr(0)
    threshold = 10.0 ** -(config.digits // 4)
    result = {
        "name": spec.name,
        "phi": _phi_label(spec.phi),
        "gamma": [str(g) for g in spec.gamma],
        "detour": spec.detour,
        "lhs": format_big(lhs, 40),
        "rhs": format_big(rhs, 40),
        "residual": format_big(residual, 3),
        "residual_threshold": f"{threshold:.0e}",
        "certificates": certs,
    }
    return result, EXIT_OK if residual < threshold else EXIT_VIOLATION


def cmd_gamma(config: RunConfig, cache: DiskCache, name: str | None) -> tuple[dict, int]:
    from .relations import find_gamma

    if config.digits_used + 20 > config.digits:
        raise ConfigError("--digits must exceed --digits-used by at least 20")
    ctx = config.context()
    if name == CONTROL_NAME:
        phi = parse_phi(config.phi)
        pi = _cached_pi(phi, config, cache, ctx)
        with ctx.scope():
            rhs = gmpy2.const_pi() * pi[0]
        label, certs = CONTROL_NAME, []
    else:
        spec = _identity_specs(config, name, ctx)
        phi = spec.phi
        rhs, certs = _cached_rhs(spec, config, cache, ctx)
        pi = _cached_pi(phi, config, cache, ctx)
        label = spec.name
    res = find_gamma(rhs, pi, config.max_denominator, config.digits_used, ctx)
    rep = res.report()
    rep["lattice_certificate"].pop("_separation", None)
    result = {
        "name": label,
        "phi": _phi_label(phi),
        "rhs": format_big(rhs, 40),
        "quadrature": certs,
        **rep,
    }
    return result, EXIT_OK


def cmd_conjecture(config: RunConfig, cache: DiskCache) -> tuple[dict, int]:
    phis = config.phi_list()
    if not phis:
        raise ConfigError("the conjecture command needs at least one phi")
    ctx = config.context()
    reports = []
    ok = True
    for p in phis:
        phi = parse_phi(p)
        key = DiskCache.key("conjecture", phi, config.digits, config.order, config.detour)
        rep = cache.get(key)
        if rep is None:
            rep = sl2z_conjecture_check(phi, ctx, side=config.detour)
            cache.put(key, rep)
        ok = ok and rep["all_integral"]
        reports.append(rep)
    result = {
        "convention": "omega -> mu omega after one anticlockwise turn",
        "verdicts": reports,
        "all_integral": ok,
    }
    return result, EXIT_OK if ok else EXIT_VIOLATION


def cmd_threefold(config: RunConfig, cache: DiskCache, singularity: str, orientation: str) -> tuple[dict, int]:
    from .hv_threefold import threefold_monodromy

    ctx = config.context()
    try:
        s = Fraction(singularity)
    except ValueError as exc:
        raise ConfigError(f"invalid singularity {singularity!r}") from exc
    m = threefold_monodromy(s, ctx, side=config.detour, orientation=orientation)
    rep = m.report()
    # 1e-30 at production precision, looser for short exploratory runs
    sym_tol = max(1e-30, 10.0 ** -(config.digits // 4))
    rep["symplectic_threshold"] = f"{sym_tol:.0e}"
    ok = m.max_distance_to_integers < 1e-20 and m.symplectic_deviation < sym_tol
    return rep, EXIT_OK if ok else EXIT_VIOLATION


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--phi", default="1/64", help="rational or decimal; comma-separated for conjecture")
    common.add_argument("--digits", type=int, default=120)
    common.add_argument("--order", type=int, default=400, help="series truncation order")
    common.add_argument("--out", help="write the JSON report here instead of stdout")
    common.add_argument("--cache-dir", default=os.environ.get(CACHE_ENV))
    common.add_argument("--contour-file", help="inline identity spec (JSON)")
    common.add_argument("--detour", default="upper", choices=("upper", "lower"))
    common.add_argument("--max-denominator", type=int, default=4)
    common.add_argument("--digits-used", type=int, default=40)

    parser = argparse.ArgumentParser(prog="hvperiods", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("monodromy", parents=[common], help="elliptic monodromy table at phi")
    p = sub.add_parser("identity", parents=[common], help="verify a contour identity")
    p.add_argument("name", nargs="?", help=f"one of {', '.join(BUILTIN_NAMES)}")
    p = sub.add_parser("gamma", parents=[common], help="recover gamma by lattice reduction")
    p.add_argument("name", nargs="?", help=f"one of {', '.join(BUILTIN_NAMES + (CONTROL_NAME,))}")
    sub.add_parser("conjecture", parents=[common], help="integrality check at each phi")
    p = sub.add_parser("threefold", parents=[common], help="AESZ 34 monodromy around a singular point")
    p.add_argument("singularity")
    p.add_argument("--orientation", default="anticlockwise", choices=("anticlockwise", "clockwise"))
    return parser


def run(argv=None) -> tuple[dict, int]:
    args = build_parser().parse_args(argv)
    config = RunConfig(args.phi, args.digits, args.order, args.detour, args.out, args.cache_dir,
                       args.contour_file, args.max_denominator, args.digits_used,
                       {"command_args": {k: getattr(args, k) for k in ("name", "singularity", "orientation")
                                         if hasattr(args, k)}})
    report = {"command": args.command, "version": __version__, "config": config.echo()}
    start = time.perf_counter()
    try:
        config.validate()
        if args.command != "conjecture" and len(config.phi_list()) != 1:
            raise ConfigError("this command takes a single phi")
        cache = DiskCache(config.cache_dir)
        if args.command == "monodromy":
            result, code = cmd_monodromy(config, cache)
        elif args.command == "identity":
            result, code = cmd_identity(config, cache, args.name)
        elif args.command == "gamma":
            result, code = cmd_gamma(config, cache, args.name)
        elif args.command == "conjecture":
            result, code = cmd_conjecture(config, cache)
        else:
            result, code = cmd_threefold(config, cache, args.singularity, args.orientation)
        report["precision"] = config.context().describe()
        report["results"] = result
    except (ConfigError, OperatorError, PathError, KeyError) as exc:
        report["error"] = {"kind": "configuration", "message": str(exc)}
        code = EXIT_CONFIG
    except (TruncationError, QuadratureFailure, ContourError, ArithmeticError) as exc:
        report["error"] = {"kind": "computation", "message": str(exc)}
        code = EXIT_COMPUTATION
    report["timings"] = {"wall_seconds": round(time.perf_counter() - start, 3)}
    report["exit_code"] = code
    return report, code


def main(argv=None) -> int:
    report, code = run(argv)
    text = json.dumps(report, indent=2)
    out = report["config"].get("out")
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
