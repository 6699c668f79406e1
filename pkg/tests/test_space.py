from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from odomutant.arith import FactoredInt
from odomutant.errors import ConfigError, PreconditionError, Undetermined, ValidationError
from odomutant.families import MultiplicityStructure
from odomutant.space import Cylinder, Point, Tail, cylinder_measure, make_partition, make_space, partition_atoms


def test_heights_of_explicit_sequence():
    sp = make_space([3, 2, 3])
    assert [sp.h(n) for n in range(4)] == [1, 3, 6, 18]


def test_heights_of_constant_two():
    assert make_space({"kind": "rule", "rule": "constant", "value": 2}).h(3) == 8


def test_periodic_explicit_sequence_repeats():
    sp = make_space({"kind": "explicit", "values": [3, 2], "periodic": True})
    assert [sp.q(n) for n in range(5)] == [3, 2, 3, 2, 3]
    assert sp.max_level is None


def test_factored_feldman_rule_is_not_expanded():
    sp = make_space({"kind": "factored", "rule": "feldman"})
    # q~(n) = 2^(n+10), q(0) = q~(0)^(2 q~(1) + 3) = 2^(10 * 2051)
    assert sp.q_factored(0) == FactoredInt.prime_power(2, 10 * (2 * 2**11 + 3))
    assert sp.h_factored(1).valuation(2) == 40990
    with pytest.raises(PreconditionError):
        sp.q(0)
    with pytest.raises(PreconditionError):
        sp.require_concrete()


def test_small_digit_values_rejected():
    with pytest.raises(ValidationError):
        make_space([3, 1])
    with pytest.raises(ConfigError):
        make_space({"kind": "rule", "rule": "nope"})


def test_levels_beyond_finite_sequence_are_undetermined():
    sp = make_space([3, 2])
    with pytest.raises(Undetermined):
        sp.q(2)


def test_cylinder_measures():
    assert cylinder_measure(make_space([3, 3]), Cylinder.of(0)) == Fraction(1, 3)
    assert cylinder_measure(make_space([3, 4, 5]), Cylinder.of(1, [0, 2], 4)) == Fraction(1, 30)
    assert cylinder_measure(make_space([3]), Cylinder.whole()) == 1


def test_cylinder_outside_digit_range():
    with pytest.raises(ValidationError):
        cylinder_measure(make_space([3, 3]), Cylinder.of(3))


def test_partition_atom_counts():
    sp = make_space({"kind": "explicit", "values": [3, 2], "periodic": True})
    assert len(partition_atoms(sp, "P", 2)) == 6
    assert len(partition_atoms(sp, "P", 0)) == 1
    # one block of size 2 at level 1
    mult = MultiplicityStructure(lambda n: (2,) if n == 1 else (1,) * sp.q(n))
    atoms = partition_atoms(sp, "P~", 2, mult)
    assert len(atoms) == 3
    assert all(a.constraints[1] == (0, 1) for a in atoms)
    assert sorted(a.constraints[0][0] for a in atoms) == [0, 1, 2]


def test_block_partition_needs_structure():
    with pytest.raises(ConfigError):
        make_partition(make_space([3, 2]), "P~", 2)


def test_point_tails():
    sp = make_space([3, 2, 3])
    assert sp.digit(Point((1,), Tail.MIN), 2) == 0
    assert sp.digit(Point((1,), Tail.MAX), 2) == 2
    with pytest.raises(Undetermined):
        sp.digit(Point((1,)), 1)


qs = st.lists(st.integers(2, 6), min_size=1, max_size=5)


@given(qs)
def test_height_recursion(values):
    sp = make_space(values)
    for n in range(len(values)):
        assert sp.h(n + 1) == sp.h(n) * sp.q(n)


@given(qs, st.integers(0, 5))
@settings(max_examples=60)
def test_atoms_have_total_mass_one_and_refine(values, level):
    sp = make_space(values)
    level = min(level, len(values) - 1)
    atoms = partition_atoms(sp, "P", level)
    assert len(atoms) == sp.h(level)
    assert sum(cylinder_measure(sp, a) for a in atoms) == 1
    finer = partition_atoms(sp, "P", level + 1)
    for a in atoms:
        kids = [b for b in finer if b.constraints[:level] == a.constraints]
        assert len(kids) == sp.q(level)
        assert sum(cylinder_measure(sp, b) for b in kids) == cylinder_measure(sp, a)


@given(st.lists(st.integers(2, 5), min_size=2, max_size=4), st.data())
@settings(max_examples=40)
def test_block_atoms_are_unions_of_fine_atoms(values, data):
    sp = make_space(values)
    level = data.draw(st.integers(1, len(values) - 1))
    q_last = sp.q(level - 1)
    cut = data.draw(st.integers(1, q_last))
    sizes = (cut, q_last - cut) if cut < q_last else (q_last,)
    mult = MultiplicityStructure(lambda n: sizes if n == level - 1 else (1,) * sp.q(n))
    part = make_partition(sp, "P~", level, mult)
    coarse = part.atoms(sp)
    assert sum(cylinder_measure(sp, c) for c in coarse) == 1
    for j in range(sp.h(level)):
        digits = sp.to_digits(j, level)
        assert coarse[part.project(sp, j)].contains(digits)


@given(qs, st.data())
def test_position_and_digits_invert(values, data):
    sp = make_space(values)
    n = len(values)
    j = data.draw(st.integers(0, sp.h(n) - 1))
    assert sp.position(sp.to_digits(j, n), n) == j
