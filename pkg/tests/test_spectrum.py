from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, settings, strategies as st

from conftest import const, toy_systems
from odomutant.arith import Verdict
from odomutant.dynamics import OdomutantSystem, apply_S
from odomutant.errors import ConfigError, PreconditionError
from odomutant.families import cyclic_family, dyadic_swap_family, identity_family
from odomutant.space import Point, Tail, make_space
from odomutant.spectrum import (Eigenvalue, check_eigen_relation, check_pullback, count_near_one,
                                eigenfunction_index, fixed_point_series, lemma_complex_check, lemma_complex_sweep,
                                theta)

Q323 = make_space({"kind": "explicit", "values": [3, 2, 3], "periodic": True})


def test_index_examples():
    assert eigenfunction_index(Q323, Point((2, 1), Tail.UNSPECIFIED), 2) == 5
    assert eigenfunction_index(Q323, Point((), Tail.MIN), 3) == 0
    assert eigenfunction_index(Q323, Point((2, 1), Tail.UNSPECIFIED), 0) == 0


def test_index_by_iterating_S():
    p = Point((), Tail.MIN)
    for j in range(Q323.h(3)):
        assert eigenfunction_index(Q323, p, 3) == j
        p = apply_S(Q323, p)
    assert eigenfunction_index(Q323, p, 3) == 0


def test_eigenvalue_rotation():
    lam = Eigenvalue.of(Q323, 4, 2)
    assert lam.rotation == Fraction(2, 3)
    assert lam.torsion(Q323)
    assert lam.value_at(Q323, Point((2, 1), Tail.UNSPECIFIED)) == Fraction(10, 3) % 1
    assert Eigenvalue.of(Q323, 0, 0).value_at(Q323, Point((1,), Tail.MIN)) == 0
    with pytest.raises(ConfigError):
        Eigenvalue.of(Q323, 6, 2)


def test_top_of_tower_wraps():
    top = Point((2, 1), Tail.UNSPECIFIED)
    assert eigenfunction_index(Q323, top, 2) == Q323.h(2) - 1
    assert eigenfunction_index(Q323, apply_S(Q323, Point((2, 1, 0), Tail.UNSPECIFIED)), 2) == 0


def test_eigen_relation_q323():
    rep = check_eigen_relation(Q323, 2, 1000, seed=1)
    assert rep.ok and rep.checked + rep.excluded == 1000 and rep.checked > 900


@pytest.mark.parametrize("name", ["identity", "cyclic", "dyadic_swap", "entropy", "feldman"])
@pytest.mark.parametrize("n", [0, 1, 2])
def test_pullback_toys(name, n):
    sys = toy_systems()[name]
    rep = check_pullback(sys, n, 200, seed=3)
    assert rep.ok and rep.checked > 0


def test_identity_pullback_is_eigen_relation():
    sys = OdomutantSystem.of(identity_family(Q323))
    a = check_pullback(sys, 2, 300, seed=9)
    assert a.ok and a.checked > 250


# -- counting lemma ----------------------------------------------------------


def test_theta_value():
    assert float(theta(Fraction(1, 2))) == pytest.approx(0.080431, abs=1e-6)


def _scan(tau, eps, lo, hi):
    """Direct evaluation; a distance within 1e-30 of eps is an exact tie and is not counted."""
    with mpmath.workdps(40):
        e = mpmath.mpf(eps.numerator) / eps.denominator
        t = mpmath.mpf(tau.numerator) / tau.denominator
        return sum(1 for j in range(lo, hi + 1) if abs(1 - mpmath.expjpi(2 * t * j)) < e - mpmath.mpf(10) ** -30)


def test_example_count():
    res = lemma_complex_check(Fraction(1, 100), Fraction(1, 2), (0, 1000))
    assert res.count == 171 == _scan(Fraction(1, 100), Fraction(1, 2), 0, 1000)
    assert float(res.bound) == pytest.approx(336.09, abs=0.01)
    assert res.verdict is Verdict.HOLDS


def test_tie_case_at_one():
    # |1 - exp(2 pi i/6)| = 1 exactly, so the sixth roots at distance one are not counted
    assert count_near_one(Fraction(1, 6), Fraction(1), 0, 5) == 1
    assert count_near_one(Fraction(1, 12), Fraction(1), 0, 11) == 3


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 60), st.integers(2, 200), st.integers(1, 190), st.integers(-300, 300), st.integers(0, 400))
def test_count_matches_scan(a, b, e, lo, length):
    tau, eps = Fraction(a, b), Fraction(e, 100)
    assert count_near_one(tau, eps, lo, lo + length) == _scan(tau, eps, lo, lo + length)


@pytest.mark.parametrize("tau,eps", [(Fraction(1), Fraction(1, 2)), (Fraction(0), Fraction(1, 2)),
                                     (Fraction(1, 10), Fraction(3, 2)), (Fraction(1, 4), Fraction(1, 2))])
def test_complex_preconditions(tau, eps):
    with pytest.raises(PreconditionError):
        lemma_complex_check(tau, eps, (0, 10))


def test_eps_range():
    with pytest.raises(ConfigError):
        lemma_complex_check(Fraction(1, 100), Fraction(2), (0, 10))


def test_sweep_small():
    rep = lemma_complex_sweep(500, seed=2)
    assert rep.cases == 500 and rep.violations == [] and rep.undecided == []


# -- fixed points ------------------------------------------------------------


def test_identity_fixed_points_diverge():
    fp = fixed_point_series(identity_family(const(3)), 5)
    assert [r["density"] for r in fp.rows] == ["1"] * 6
    assert fp.rows[-1]["partial_sum"] == "6"
    assert "divergence" in fp.advisory


def test_cyclic_fixed_points_vanish():
    fp = fixed_point_series(cyclic_family(const(4)), 5)
    assert all(r["density"] == "0" for r in fp.rows)


def test_swap_fixed_points_vanish():
    fam = dyadic_swap_family(const(2))
    fp = fixed_point_series(fam, 4)
    # oracle: scan each digit against every table
    for r in fp.rows:
        n = r["n"]
        fixed = [x for x in range(2) if all(t[x] == x for t in fam.tables(n))]
        assert Fraction(r["density"]) == Fraction(len(fixed), 2)
    assert all(r["density"] == "0" for r in fp.rows)
