import itertools
import math

import pytest
from hypothesis import given, settings, strategies as st

from odomutant.errors import ConfigError, InfeasibleError
from odomutant.families import (FeldmanParams, arrange, cyclic_family, dyadic_swap_family, entropy_family,
                                entropy_index, family_from_config, feldman_block_pattern, feldman_family,
                                feldman_taus, feldman_words, identity_family, invert, is_permutation, kappa,
                                random_fixed_endpoint_family, table_family, unrank, validate_family)
from odomutant.space import make_space

from conftest import const


def test_identity_family_values():
    assert identity_family([2, 2]).sigma(0, 0, 1) == 1
    assert identity_family([3, 2]).sigma(0, 1, 2) == 2
    rep = validate_family([3, 2, 3], identity_family([3, 2, 3]), ["fixes_zero", "fixes_max"])
    assert rep.ok
    assert set(rep.fixed_point_density.values()) == {"1"}


def test_cyclic_family_values():
    fam = cyclic_family([3, 3, 3])
    assert fam.sigma(0, 2, 2) == 1
    assert fam.sigma(0, 1, 2) == 0
    assert all(fam.table(n, 0) == tuple(range(3)) for n in range(2))


def test_cyclic_family_has_no_common_fixed_point():
    rep = validate_family(const(4), cyclic_family(const(4)), n_max=3)
    assert all(v == 0 for v in rep.fixed_point_sizes.values())


def test_fixed_endpoint_family_on_four_digits():
    fam = random_fixed_endpoint_family([4, 2, 4], seed=3, distinct=True)
    a, b = fam.tables(0)
    assert a[0] == b[0] == 0 and a[3] == b[3] == 3
    assert {a, b} == {(0, 1, 2, 3), (0, 2, 1, 3)}


def test_fixed_endpoint_family_is_seeded():
    f1 = random_fixed_endpoint_family(const(7), seed="s")
    f2 = random_fixed_endpoint_family(const(7), seed="s")
    assert f1.tables(2) == f2.tables(2)


def test_distinct_request_beyond_factorial_fails():
    fam = random_fixed_endpoint_family(const(3), seed=1, distinct=True)
    with pytest.raises(InfeasibleError):
        fam.tables(0)


def test_entropy_index_on_six():
    assert entropy_index(6, 6) == 3
    # scan oracle: least i with (i-1)! < 6 <= i!
    assert min(i for i in range(2, 5) if math.factorial(i - 1) < 6 <= math.factorial(i)) == 3


def test_entropy_family_shape():
    fam = entropy_family(const(6), seed=1)
    rep = validate_family(fam.space, fam, ["distinct"], n_max=3)
    assert rep.ok
    for t in fam.tables(0):
        assert t[5] == 5 and t[0] == 0 and t[4] == 4  # only 1..3 move


def test_feldman_toy_sizes():
    params = FeldmanParams((2,))
    assert params.q(0) == 128 and params.q(5) == 128
    assert params.c(0) == 64


def test_feldman_level_zero_words():
    assert feldman_words(FeldmanParams((3,)), 0).words == ((0,), (1,), (2,))


def test_feldman_first_words_by_expansion():
    params = FeldmanParams((2,))
    w = feldman_words(params, 1)
    # a_0 = <<a><a>... 4 times, <b> 4 times> 16 times
    assert w.words[0] == ((0,) * 4 + (1,) * 4) * 16
    assert w.words[1] == ((0,) * 16 + (1,) * 16) * 4
    assert len(w.words[0]) == 128


def test_feldman_taus_rearrange_blocks_into_the_next_words():
    params = FeldmanParams((2,))
    for n in range(2):
        c, q = params.c(n), params.q(n)
        u = [x // c for x in range(q)]
        for j, tau in enumerate(feldman_taus(params, n)):
            assert arrange(u, tau) == feldman_block_pattern(params, n, j)
            assert tau[0] == 0


def test_feldman_family_is_block_constant():
    fam = feldman_family(FeldmanParams((2,)))
    rep = validate_family(fam.space, fam, n_max=1)
    assert rep.ok
    assert kappa(fam, 0) == 1


def test_single_letter_feldman_word():
    params = FeldmanParams((1,))
    assert set(feldman_words(params, 1).words[0]) == {0}


def test_non_bijective_table_reported_at_its_position():
    fam = table_family([2, 2, 2], {0: [[0, 1], [0, 0]], 1: [[0, 1], [1, 0]]})
    rep = validate_family(fam.space, fam)
    assert not rep.ok
    assert rep.violations[0]["level"] == 0


def test_swap_family_needs_binary_digits():
    fam = dyadic_swap_family([3, 3])
    rep = validate_family(fam.space, fam)
    assert not rep.ok


def test_family_config_errors():
    with pytest.raises(ConfigError):
        family_from_config(const(3), {"preset": "entropy"})
    with pytest.raises(ConfigError):
        family_from_config(const(3), {"preset": "unknown"})


@given(st.integers(1, 6), st.data())
def test_unrank_enumerates_all_permutations(m, data):
    items = list(range(m))
    r = data.draw(st.integers(0, math.factorial(m) - 1))
    assert unrank(r, items) == list(sorted(itertools.permutations(items))[r])


@given(st.permutations(list(range(7))))
def test_invert_is_inverse(p):
    inv = invert(p)
    assert is_permutation(inv)
    assert all(inv[p[x]] == x for x in range(7))


@given(st.integers(4, 9), st.integers(0, 10**6))
@settings(max_examples=30)
def test_fixed_endpoint_tables_are_bijections(q, seed):
    fam = random_fixed_endpoint_family(make_space([q, 3]), seed)
    for t in fam.tables(0):
        assert sorted(t) == list(range(q)) and t[0] == 0 and t[-1] == q - 1
        assert all(fam.sigma_inv(0, 0, fam.sigma(0, 0, x)) == x for x in range(q))
