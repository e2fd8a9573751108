import json
import math
from fractions import Fraction
from importlib import resources

import gmpy2
import pytest
from gmpy2 import mpc

from hvperiods.fuchsian import INFINITY, OperatorError, frobenius_basis, indicial_exponents, singular_locations
from hvperiods.hv_threefold import (
    TopologicalData,
    load_aesz34,
    oracle_coefficients,
    pi_prefactor,
    pi_vector,
    threefold_monodromy,
    varpi,
)
from hvperiods.numerics import (
    PrecisionContext,
    format_big,
    mat_inv,
    mat_mul,
    mat_sub,
    max_abs_entry,
    to_big,
    transpose,
)
from hvperiods.relations import sigma

PHI = Fraction(1, 64)

EXPECTED = {
    Fraction(1, 25): [[1, 0, 0, 0], [0, 1, 0, 0], [-10, 0, 1, 0], [0, 0, 0, 1]],
    Fraction(1, 9): [[-9, -2, 2, 0], [0, 1, 0, 0], [-50, -10, 11, 0], [-10, -2, 2, 1]],
    Fraction(1): [[-39, -16, 16, -24], [60, 25, -24, 36], [-100, -40, 41, -60], [-40, -16, 16, -23]],
    Fraction(0): [[1, -1, 3, 6], [0, 1, -6, -12], [0, 0, 1, 0], [0, 0, 1, 1]],
}


def raw_asset():
    return json.loads(resources.files("hvperiods").joinpath("data/aesz34.json").read_text())


def test_loader_normalises_indices(low):
    op = load_aesz34()
    assert indicial_exponents(op, 0, low) == [1, 1, 1, 1]
    raw = raw_asset()
    assert raw["order"] == 4
    assert set(EXPECTED) <= set(singular_locations(op, low))
    assert INFINITY not in singular_locations(op, low)


@pytest.mark.parametrize("mutate,match", [
    (lambda d: d.update(order=3, coefficients=d["coefficients"][:4]), "order 4"),
    (lambda d: d["coefficients"][0].__setitem__(0, "1"), "indices"),
    (lambda d: d["coefficients"][4].__setitem__(3, "-224"), None),
    (lambda d: d.pop("coefficients"), "malformed"),
])
def test_loader_rejects_bad_assets(mutate, match):
    data = raw_asset()
    mutate(data)
    with pytest.raises(OperatorError, match=match):
        load_aesz34(data)


def test_loader_rejects_unreadable_file(tmp_path):
    bad = tmp_path / "broken.json"
    bad.write_text("{not json")
    with pytest.raises(OperatorError):
        load_aesz34(bad)


def test_holomorphic_series_against_multinomial_oracle():
    assert oracle_coefficients(7) == [1, 5, 45, 545, 7885, 127905, 2241225]
    op = load_aesz34()
    b = frobenius_basis(op, 0, PrecisionContext(40, 12, 1e-15), exact=True)
    assert list(b.solutions[0].coefficients[0]) == oracle_coefficients(12)


def test_pi_at_one_sixty_fourth(mid):
    pi = pi_vector(PHI, mid)
    # frozen from an independent 60-digit evaluation; the scale factor is exactly 1
    assert format_big(pi[0], 20) == "-1.04492949165124212773e+0"
    assert format_big(pi[1], 20) == "0-1.25117192551933488573e+1j"
    assert format_big(pi[2], 20) == "0-4.23168089514910770830e+0j"
    assert format_big(pi[3], 20) == "2.70448178306120448371e+0"


def test_pi3_is_holomorphic_period(mid):
    phi = Fraction(1, 1000)
    pi = pi_vector(phi, mid)
    w = varpi(phi, mid)
    with mid.scope():
        tpi3 = mpc(0, 2 * gmpy2.const_pi()) ** 3
        assert abs(pi[2] - tpi3 * w[0]) < mid.eps * 1000
        series = sum(to_big(c) * to_big(phi) ** (n + 1) for n, c in enumerate(oracle_coefficients(30)))
        assert abs(w[0] - series) < 1e-45


def test_prefactor_layout(low):
    top = TopologicalData()
    assert top.sigma == 0
    c = pi_prefactor(low, top)
    with low.scope():
        tpi = mpc(0, 2 * gmpy2.const_pi())
        assert abs(c[2][0] - tpi ** 3) < low.eps * 1000
        assert abs(c[3][1] - tpi ** 2) < low.eps * 1000
        assert c[2][1] == 0 and c[3][0] == 0


@pytest.fixture(scope="module")
def monodromies(mid):
    return {s: threefold_monodromy(s, mid) for s in EXPECTED}


def test_monodromy_matrices(monodromies):
    for s, m in monodromies.items():
        assert m.integer_matrix == EXPECTED[s], s
        assert m.max_distance_to_integers < 1e-40
        assert m.symplectic_deviation < 1e-40
        assert m.report()["convention"] == "Pi -> M Pi after one anticlockwise turn"


def test_mum_monodromy_closed_form(monodromies, mid):
    # log(phi) -> log(phi) + 2 pi i on the ladder y_k gives U[k][k-m] = (2 pi i)^m / m!
    with mid.scope():
        tpi = mpc(0, 2 * gmpy2.const_pi())
        u = [[tpi ** (k - j) / math.factorial(k - j) if j <= k else mpc(0) for j in range(4)]
             for k in range(4)]
        p = pi_prefactor(mid)
        closed = mat_mul(mat_mul(p, u), mat_inv(p))
        assert max_abs_entry(mat_sub(closed, monodromies[Fraction(0)].matrix)) < mid.tol


def test_clockwise_is_inverse(monodromies, mid):
    cw = threefold_monodromy(Fraction(1, 25), mid, orientation="clockwise")
    with mid.scope():
        prod = mat_mul(cw.matrix, monodromies[Fraction(1, 25)].matrix)
        assert max_abs_entry(mat_sub(prod, [[int(i == j) for j in range(4)] for i in range(4)])) < mid.tol
    assert cw.integer_matrix[2] == [10, 0, 1, 0]
    with pytest.raises(ValueError):
        threefold_monodromy(Fraction(1, 25), mid, orientation="sideways")


def test_symplectic_form():
    s = sigma(4)
    assert mat_mul(transpose(s), s) == [[int(i == j) for j in range(4)] for i in range(4)]
    assert transpose(s) == [[-x for x in r] for r in s]
