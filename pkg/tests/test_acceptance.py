"""Acceptance criteria at production precision (120 digits, order 400).

Each test records one PASS/FAIL line, listed again in the terminal summary.
The identity integrals are cached in a session directory so the gamma runs
reuse them instead of recomputing.
"""
from fractions import Fraction

import pytest

from hvperiods.cli import run
from hvperiods.contours import builtin_identity, integrate_builtin, invariance_check, tensor_field
from hvperiods.fuchsian import apply_operator, frobenius_basis
from hvperiods.hv_elliptic import constant_term_oracle, elliptic_operator, f0_coefficients
from hvperiods.hv_threefold import threefold_monodromy
from hvperiods.numerics import PrecisionContext, identity, mat_mul, mat_sub, max_abs_entry, to_big
from hvperiods.relations import (
    sigma,
    sigma_pair,
    symplectic_defect,
    vanishing_cycle_branch_relation,
)
from hvperiods.transport import (
    Arc,
    Continuation,
    Loop,
    PlanePath,
    homotopy_check,
    standard_basepoint,
    standard_loop,
    transport,
)

pytestmark = pytest.mark.slow

PHI = Fraction(1, 64)
PROD = ["--digits", "120", "--order", "400"]
HIGH = PrecisionContext(120, 400, 1e-40)
I2 = [[1, 0], [0, 1]]
MU_TABLE = {
    "0": ([[1, 0], [3, 1]], [[1, 0], [3, 1]]),
    "1/100": (I2, [[1, -2], [0, 1]]),
    "1/64": (I2, [[5, -4], [4, -3]]),
    "1/36": (I2, [[5, -2], [8, -3]]),
    "1/9": ([[1, -2], [0, 1]], I2),
    "1": ([[7, -6], [6, -5]], I2),
}
IDENTITIES = {
    2: ("vanishing-1-9", "1/64 -> 1/9 identity, gamma (1/2,0,-5/2,1/2)"),
    3: ("vanishing-1-25", "1/36 -> 1/9 identity, gamma (0,0,-5/2,0)"),
    4: ("t3-holomorphic", "closed T3 identity, gamma (-1,0,0,0)"),
}
EXPECTED_GAMMA = {
    "vanishing-1-9": ["1/2", "0", "-5/2", "1/2"],
    "vanishing-1-25": ["0", "0", "-5/2", "0"],
    "t3-holomorphic": ["-1", "0", "0", "0"],
}


@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    return str(tmp_path_factory.mktemp("acceptance-cache"))


def _run(argv, cache_dir):
    return run([*argv, "--cache-dir", cache_dir])


def test_criterion_1_monodromy_table(acceptance, cache_dir):
    report, code = _run(["monodromy", "--phi", "1/64", *PROD], cache_dir)
    entries = {m["location"]: m for m in report["results"]["monodromies"]}
    ok = code == 0 and all(
        loc in entries
        and (entries[loc]["left"], entries[loc]["right"]) == MU_TABLE[loc]
        and entries[loc]["integral_unimodular"]
        for loc in MU_TABLE
    )
    worst = max(float(entries[loc]["max_distance_to_integers"]) for loc in MU_TABLE if loc in entries)
    det = max(float(entries[loc]["det_minus_one"]) for loc in MU_TABLE if loc in entries)
    ok = ok and worst < 1e-20 and det < 1e-30
    acceptance(1, "six mu matrices at phi=1/64", ok, f"(dist {worst:.1e}, |det-1| {det:.1e})")
    assert ok


@pytest.mark.parametrize("number", [2, 3, 4])
def test_criteria_2_to_4_identities(number, acceptance, cache_dir):
    name, title = IDENTITIES[number]
    report, code = _run(["identity", name, "--phi", "1/64", *PROD], cache_dir)
    residual = float(report["results"]["residual"])
    ok = code == 0 and residual < 1e-30
    detail = f"(residual {residual:.1e})"
    if number == 4:
        ident = builtin_identity(name, PHI, HIGH)
        inv = invariance_check(ident.contour, tensor_field(PHI, (ident.g1, ident.g2), HIGH), HIGH)
        ok = ok and inv
        detail += f" invariance {inv}"
    acceptance(number, title, ok, detail)
    assert ok


def test_criterion_5_gamma_recovery(acceptance, cache_dir):
    ok = True
    worst = float("inf")
    for name, expected in EXPECTED_GAMMA.items():
        for used in (30, 40, 50):
            report, code = _run(["gamma", name, "--phi", "1/64", *PROD, "--digits-used", str(used)], cache_dir)
            res = report["results"]
            sep = float(res["lattice_certificate"]["separation"])
            worst = min(worst, sep)
            ok = ok and code == 0 and res["status"] == "found" and res["gamma"] == expected and sep >= 1e10
    acceptance(5, "gamma recovered by LLL at digits_used 30/40/50", ok, f"(min separation {worst:.1e})")
    assert ok


def test_criterion_6_branch_relation(acceptance):
    m = threefold_monodromy(Fraction(1, 25), HIGH, orientation="clockwise")
    relation = vanishing_cycle_branch_relation((1, 0, -5, 1), (1, 0, 5, 1), m.matrix)
    defect = symplectic_defect(m.matrix, HIGH)
    ok = relation and m.max_distance_to_integers < 1e-20 and defect < 1e-30
    acceptance(6, "(1,0,5,1) = M_1/25 (1,0,-5,1), M integral and symplectic", ok,
               f"(dist {float(m.max_distance_to_integers):.1e}, symplectic {float(defect):.1e})")
    assert ok


def test_criterion_7_oracle(acceptance):
    ok = all(
        f0_coefficients(phi, 13) == [constant_term_oracle(phi, n) for n in range(13)]
        for phi in (Fraction(1), PHI, Fraction(3, 7))
    )
    ok = ok and f0_coefficients(1, 4) == [1, 3, 15, 93]
    acceptance(7, "binomial sum equals constant-term oracle for n <= 12", ok)
    assert ok


def test_criterion_8_exact_annihilation(acceptance):
    ctx = PrecisionContext(40, 50, 1e-18)
    ok = True
    for phi in (Fraction(1), PHI):
        op = elliptic_operator(phi)
        basis = frobenius_basis(op, 0, ctx, exact=True)
        ok = ok and all(apply_operator(op, s).is_zero() for s in basis.solutions)
    acceptance(8, "exact annihilation through order 50 at phi 1 and 1/64", ok)
    assert ok


def test_criterion_9_conjecture(acceptance, cache_dir):
    report, code = _run(["conjecture", "--phi", "1/64,1,2,1/10+i/10", *PROD], cache_dir)
    verdicts = report["results"]["verdicts"]
    ok = code == 0 and len(verdicts) == 4 and all(v["all_integral"] for v in verdicts)
    acceptance(9, "integral elliptic monodromy at phi 1/64, 1, 2, 1/10+i/10", ok)
    assert ok


def _close(a, b, ctx, slack=1):
    with ctx.scope():
        return max_abs_entry(mat_sub(a, b)) < ctx.tol * slack


def test_criterion_10_property_suite(acceptance, low, mid):
    checks = {}
    op = elliptic_operator(PHI)
    cont = Continuation([op], low)
    basis0 = frobenius_basis(op, 0, low)
    far = frobenius_basis(op, -Fraction(1, 2), low)
    b = standard_basepoint(cont.singular, low)
    half = Fraction(1, 2)

    whole = PlanePath((Loop(half, 1, half),))
    halves = PlanePath((Arc(half, 1, half, 1, 1), Arc(half, 1, 1, Fraction(3, 2), 1)))
    checks["homotopy"] = homotopy_check(op, far, whole, halves, low, cont)

    rev = True
    for s in (Fraction(1, 100), Fraction(1, 36)):
        p = standard_loop(b, s, cont.singular, low)
        t = transport(op, basis0, p, low, cont).matrix
        r = transport(op, basis0, p.reversed(), low, cont).matrix
        with low.scope():
            rev = rev and _close(mat_mul(t, r), identity(2), low)
    checks["reversal"] = rev

    t = transport(op, far, PlanePath((Loop(-1, half, 0),)), low, cont).matrix
    checks["ordinary loop"] = _close(t, identity(2), low)

    a = integrate_builtin(builtin_identity("vanishing-1-25", PHI, low), low)
    c = integrate_builtin(builtin_identity("vanishing-1-25", PHI, mid), mid)
    with mid.scope():
        checks["node doubling"] = (c.error_estimate < mid.target_tolerance
                                   and abs(to_big(a.value) - c.value) < low.tol * abs(c.value))

    sig = True
    for n in (2, 4):
        s = sigma(n)
        sig = sig and mat_mul(s, s) == [[-int(i == j) for j in range(n)] for i in range(n)]
    s22 = sigma_pair(2, 2)
    checks["sigma"] = sig and mat_mul(s22, s22) == [[int(i == j) for j in range(4)] for i in range(4)]

    values = [abs(integrate_builtin(builtin_identity("vanishing-1-9", phi, low), low).value)
              for phi in (Fraction(10, 100), Fraction(105, 1000), Fraction(11, 100))]
    checks["shrink"] = values[0] > values[1] > values[2] and values[2] < values[0] / 5

    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    acceptance(10, "property suite", ok, f"(failed: {', '.join(failed)})" if failed else "")
    assert ok
