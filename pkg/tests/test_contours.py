from fractions import Fraction

import gmpy2
import mpmath
import pytest
from gmpy2 import mpc, mpfr

from hvperiods.contours import (
    BUILTIN_NAMES,
    ContourError,
    ContourSpec,
    QuadratureFailure,
    builtin_identity,
    gauss_legendre,
    integrand,
    integrate_builtin,
    integrate_closed,
    integrate_open,
    integrate_spec,
    invariance_check,
    tanh_sinh_left,
    tensor_field,
    trapezoid_periodic,
)
from hvperiods.hv_threefold import pi_vector
from hvperiods.numerics import to_big
from hvperiods.relations import identity_lhs
from hvperiods.transport import Loop, PlanePath, Segment, exclusion_radius, standard_loop

PHI = Fraction(1, 64)


def test_gauss_legendre(low):
    with low.scope():
        v, n, err = gauss_legendre(lambda x: [gmpy2.exp(x)], low, mpfr(10) ** -35)
        e = gmpy2.exp(mpfr(1))
        assert abs(v[0] - (e - 1 / e)) < mpfr(10) ** -35
        assert n >= 48 and err < mpfr(10) ** -35


def test_tanh_sinh_endpoint_singularities(low):
    with low.scope():
        v, _, _ = tanh_sinh_left(lambda x: [gmpy2.log(x), gmpy2.log(x) ** 2], low, mpfr(10) ** -30)
        assert abs(v[0] + 1) < mpfr(10) ** -30
        assert abs(v[1] - 2) < mpfr(10) ** -30


def test_trapezoid_periodic(low):
    with low.scope():
        two_pi = 2 * gmpy2.const_pi()
        v, _, _ = trapezoid_periodic(lambda t: [gmpy2.exp(gmpy2.cos(two_pi * t))], low, mpfr(10) ** -35)
    mpmath.mp.dps = 45
    oracle = mpmath.besseli(0, 1)
    assert abs(float(v[0]) - float(oracle)) < 1e-15
    assert abs(mpmath.mpf(str(v[0])) - oracle) < mpmath.mpf(10) ** -35


def test_quadrature_budget(low):
    with low.scope():
        with pytest.raises(QuadratureFailure):
            gauss_legendre(lambda x: [1 / (x - mpc(0, mpfr(10) ** -6))], low, mpfr(10) ** -35, max_nodes=200)


def test_zero_length_chain(low):
    f = tensor_field(PHI, ((1, 0), (1, 1)), low)
    r = integrate_open(ContourSpec("open", PlanePath()), f, low)
    assert r.value == 0 and r.node_count == 0


def test_zero_pairing_integrand(low):
    f = tensor_field(PHI, (0, 0, 0, 0), low)
    assert integrand(Fraction(1, 20), f, low) == 0


def test_spec_validation(low):
    with pytest.raises(ContourError):
        ContourSpec("spiral", PlanePath())
    with pytest.raises(ContourError):
        ContourSpec("open", PlanePath(), (0,))
    with pytest.raises(KeyError):
        builtin_identity("nowhere", PHI, low)


def test_integrand_finite_at_vanishing_endpoint(low):
    # (1,0)x(1,2) pairs with the cycle vanishing at 1/36: no log blow-up at the endpoint
    f = tensor_field(PHI, ((1, 0), (1, 2)), low)
    with low.scope():
        vals = [integrand(Fraction(1, 36) + Fraction(1, 10 ** k), f, low) for k in (6, 12, 18)]
        assert abs(vals[2] - vals[1]) < abs(vals[1] - vals[0])
        assert abs(vals[2] - vals[1]) < mpfr(10) ** -5
        assert all(abs(v) < 1e6 for v in vals)


@pytest.fixture(scope="module")
def pi(low):
    return pi_vector(PHI, low)


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_builtin_identities_low_precision(name, low, pi):
    ident = builtin_identity(name, PHI, low)
    r = integrate_builtin(ident, low)
    lhs = identity_lhs(ident.gamma, PHI, low, pi=pi)
    with low.scope():
        assert abs(r.value - lhs) < low.tol * abs(lhs)
    assert r.error_estimate < low.target_tolerance
    assert r.node_count > 0


def test_invariance(low):
    t3 = builtin_identity("t3-holomorphic", PHI, low)
    assert invariance_check(t3.contour, tensor_field(PHI, (t3.g1, t3.g2), low), low)
    f = tensor_field(PHI, ((1, 0), (1, 0)), low)
    loop0 = ContourSpec("closed", standard_loop(f.basepoint, 0, f.continuation.singular, low))
    assert not invariance_check(loop0, f, low)
    with pytest.raises(ContourError):
        integrate_closed(loop0, f, low)


def ordinary_triangle():
    a = Fraction(1, 200)
    b = (Fraction(1, 200), Fraction(1, 100))
    c = (Fraction(1, 150), Fraction(1, 100))
    pts = [to_big(a), mpc(to_big(b[0]).real, to_big(b[1]).real), mpc(to_big(c[0]).real, to_big(c[1]).real)]
    return PlanePath((Segment(pts[0], pts[1]), Segment(pts[1], pts[2]), Segment(pts[2], pts[0])))


def test_null_homotopic_loop(low):
    with low.scope():
        path = ordinary_triangle()
    f = tensor_field(PHI, ((1, 0), (1, 0)), low)
    spec = ContourSpec("closed", path)
    assert invariance_check(spec, f, low)
    r = integrate_closed(spec, f, low)
    assert abs(r.value) < low.tol


def test_cauchy_for_holomorphic_pairing(low):
    # (1,0)x(1,1) pairs with the cycle vanishing at phi: the integrand is holomorphic there
    f = tensor_field(PHI, ((1, 0), (1, 1)), low)
    path = standard_loop(f.basepoint, PHI, f.continuation.singular, low)
    r = integrate_closed(ContourSpec("closed", path), f, low)
    assert abs(r.value) < low.tol


@pytest.fixture(scope="module")
def t3(low):
    ident = builtin_identity("t3-holomorphic", PHI, low)
    f = tensor_field(PHI, (ident.g1, ident.g2), low)
    return f, ident.contour.path, integrate_closed(ident.contour, f, low).value


def test_reversed_closed_contour(t3, low):
    f, path, fwd = t3
    back = integrate_closed(ContourSpec("closed", path.reversed()), f, low).value
    with low.scope():
        assert abs(fwd + back) < low.tol * abs(fwd)


def test_closed_contour_start_point_independence(t3, low):
    f, path, a = t3
    loop_at = next(i for i, p in enumerate(path.pieces) if isinstance(p, Loop))
    shifted = PlanePath(path.pieces[loop_at:] + path.pieces[:loop_at])
    assert shifted.pieces[0] == path.pieces[loop_at]
    b = integrate_closed(ContourSpec("closed", shifted), f, low).value
    with low.scope():
        assert abs(a - b) < low.tol * abs(a)


def test_contour_deformation_invariance(low):
    ident = builtin_identity("vanishing-1-9", PHI, low)
    f = tensor_field(PHI, (ident.g1, ident.g2), low)
    s = Fraction(1, 36)
    r = 2 * exclusion_radius(s, f.continuation.singular, low)
    with low.scope():
        corners = [to_big(PHI), to_big(s) - r, to_big(s) - r + mpc(0, r), to_big(s) + r + mpc(0, r),
                   to_big(s) + r, to_big(Fraction(1, 9))]
        square = PlanePath(tuple(Segment(p, q) for p, q in zip(corners, corners[1:])))
    spec = ContourSpec("open", square, (PHI, Fraction(1, 9)))
    a = integrate_builtin(ident, low).value
    b = integrate_spec(spec, PHI, (ident.g1, ident.g2), low, f).value
    with low.scope():
        assert abs(a - b) < low.tol * abs(a)


def test_node_doubling_converges_with_precision(low, mid):
    ident_low = builtin_identity("vanishing-1-25", PHI, low)
    ident_mid = builtin_identity("vanishing-1-25", PHI, mid)
    a = integrate_builtin(ident_low, low)
    b = integrate_builtin(ident_mid, mid)
    assert b.node_count >= a.node_count
    assert b.error_estimate < mid.target_tolerance
    with mid.scope():
        assert abs(to_big(a.value) - b.value) < low.tol * abs(b.value)


def test_contour_shrinks_as_phi_tends_to_one_ninth(low):
    values = []
    for phi in (Fraction(10, 100), Fraction(105, 1000), Fraction(11, 100)):
        ident = builtin_identity("vanishing-1-9", phi, low)
        values.append(abs(integrate_builtin(ident, low).value))
    assert values[0] > values[1] > values[2]
    assert values[2] < values[0] / 5
