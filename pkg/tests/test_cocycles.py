import random
from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, settings, strategies as st

from odomutant import cocycles as C
from odomutant.dynamics import OdomutantSystem, apply_S, apply_T_power, x_minus
from odomutant.errors import ConfigError, DomainError
from odomutant.families import cyclic_family, identity_family
from odomutant.space import Point, Tail, make_space

from conftest import const, toy_systems


def test_identity_cocycles_are_one():
    sys_ = OdomutantSystem.of(identity_family(const(3)))
    rng = random.Random(0)
    for _ in range(50):
        p = sys_.space.random_point(rng, 6, Tail.MIN)
        assert C.cocycle_T(sys_, p) == 1 and C.cocycle_S(sys_, p) == 1


def test_swap_example_cocycles(swap):
    p = Point((1, 0, 0), Tail.MIN)
    assert C.cocycle_T(swap, p) == 2
    assert C.cocycle_S(swap, p) == 2
    sp = swap.space
    assert sp.digits(apply_T_power(swap, p, 2), 5) == sp.digits(apply_S(sp, p), 5)


@pytest.mark.parametrize("name", ["cyclic", "entropy", "feldman"])
def test_S_cocycle_at_the_minimal_point(name):
    sys_ = toy_systems()[name]
    fam = sys_.family
    assert C.cocycle_S(sys_, x_minus()) == fam.sigma(0, 0, 1) - fam.sigma(0, 0, 0)


def test_orbit_equivalence_on_cyclic_and_feldman():
    cyc = OdomutantSystem.of(cyclic_family(const(4)))
    assert C.verify_orbit_equivalence(cyc, 1000, seed=1).ok
    assert C.verify_orbit_equivalence(toy_systems()["feldman"], 100, seed=1).ok


def test_phi_values():
    assert C.PhiMap("linear")(5) == 5
    assert mpmath.almosteq(C.PhiMap("power", Fraction(1, 2))(16), 4, 1e-12)
    t = mpmath.mpf(1000)
    assert mpmath.almosteq(C.PhiMap("log_quotient", m=0)(1000), mpmath.log(t) / t, 1e-12)
    assert mpmath.almosteq(C.PhiMap("log_quotient", m=1)(1000), 1, 1e-12)
    assert mpmath.almosteq(C.PhiMap("log_quotient", m=2)(1000), mpmath.log(t) / mpmath.log(mpmath.log(t)), 1e-12)
    assert mpmath.almosteq(C.PhiMap.from_config("log")(1000), mpmath.log(t), 1e-12)


def test_phi_config_errors():
    with pytest.raises(ConfigError):
        C.PhiMap("cubic")
    with pytest.raises(ConfigError):
        C.PhiMap("power", Fraction(-1))
    with pytest.raises(DomainError):
        C.PhiMap("log_quotient", m=3)(3)


def test_linear_gauge_on_binary_odometer_does_not_converge():
    table = C.phi_series_C1(const(2), C.PhiMap("linear"), 20)
    assert all(mpmath.almosteq(t, 2) for _, t, _ in table.rows)
    assert "divergence" in table.advisory
    assert table.monotone()


def test_log_gauge_on_binary_odometer():
    table = C.phi_series_C1(const(2), C.PhiMap("log"), 45)
    for n, t, _ in table.rows:
        assert mpmath.almosteq(t, (n + 1) * mpmath.log(2) / 2**n, 1e-12)
    assert table.rows[40][1] < 1e-6
    assert table.monotone()


def test_C1_handles_huge_heights_in_log_space():
    sp = make_space({"kind": "factored", "rule": "feldman"})
    table = C.phi_series_C1(sp, C.PhiMap("power", Fraction(1, 3)), 2)
    assert len(table.rows) == 3
    assert all(r[1] == 0 or mpmath.isfinite(r[1]) for r in table.rows)


def test_C2_first_series_for_the_odometer():
    sp = const(3)
    sys_ = OdomutantSystem.of(identity_family(sp))
    first, second, inner = C.phi_series_C2(sys_, C.PhiMap("linear"), 4)
    for n, t, _ in first.rows:
        want = mpmath.mpf((sp.q(n) - 1) * sp.q(n + 1) * 2 * sp.h(n)) / sp.h(n + 2)
        assert mpmath.almosteq(t, want, 1e-12)
        assert inner[n]["first"] == {1: (sp.q(n) - 1) * sp.q(n + 1)}


def test_cyclic_displacements():
    fam = cyclic_family(const(4))
    first, second = C.displacement_counts(fam, 0)
    assert dict(first) == {1: 9, 3: 3}
    assert (first, second) == C._displacements_by_scan(fam, 0)


def test_C2_partial_sums_stabilise_for_double_exponential():
    sp = make_space({"kind": "rule", "rule": "double_exponential", "levels": 9})
    sys_ = OdomutantSystem.of(identity_family(sp))
    first, second, _ = C.phi_series_C2(sys_, C.PhiMap("power", Fraction(1, 3)), 6)
    assert first.monotone() and second.monotone()
    for table in (first, second):
        assert table.rows[-1][1] < mpmath.mpf(10) ** -12
        assert table.rows[-1][2] - table.rows[-2][2] < mpmath.mpf(10) ** -12
        assert mpmath.almosteq(table.rows[-1][2], mpmath.mpf("1.57117355364424"), 1e-12)


def test_level_law_telescopes():
    sp = make_space({"kind": "explicit", "values": [3, 2, 5], "periodic": True})
    for N in range(6):
        total = sum(C.level_law(sp, n) for n in range(N + 1))
        assert total == 1 - Fraction(1, sp.h(N + 1))
        assert C.level_law(sp, N) == Fraction(sp.q(N) - 1, sp.h(N + 1))


def test_identity_histogram_and_determinism():
    sys_ = OdomutantSystem.of(identity_family(const(3)))
    rep = C.cocycle_stats(sys_, 400, 64, seed=9)
    assert rep.histogram == {1: 400 - rep.excluded}
    sw = toy_systems()["dyadic_swap"]
    a = C.cocycle_stats(sw, 300, 64, seed=2).to_json()
    b = C.cocycle_stats(sw, 300, 64, seed=2).to_json()
    assert a == b


def test_level_frequencies_fall_in_binomial_bands():
    rep = C.cocycle_stats(toy_systems()["entropy"], 2000, 64, seed=4)
    assert all(v["within_3_sigma"] for v in rep.level_law.values())


@given(st.integers(0, 10**6))
@settings(max_examples=80)
def test_cocycle_identities_on_random_points(seed):
    rng = random.Random(seed)
    name = rng.choice(["cyclic", "dyadic_swap", "entropy"])
    sys_ = toy_systems()[name]
    p = sys_.space.random_point(rng, 6, Tail.MIN)
    try:
        chk = C.check_point(sys_, p)
    except DomainError:
        return
    assert chk.ok_T and chk.ok_S and chk.bound_ok
