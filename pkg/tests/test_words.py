import itertools
import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from odomutant import words as W
from odomutant.dynamics import OdomutantSystem, x_minus
from odomutant.errors import PreconditionError
from odomutant.families import FeldmanParams, feldman_words, identity_family, multiplicity_family
from odomutant.space import make_space

from conftest import const, toy_systems

# word counts of the entropy family on q = 6 (seed 1), frozen after matching
# the windows of one long orbit segment started at the minimal point
ENTROPY_COUNTS = {(1, 1): 48, (1, 2): 290, (2, 2): 316, (1, 3): 1804, (2, 3): 1828, (3, 3): 2008}


def orbit_windows(system, level, n, steps):
    part = W.partition_for(system, "P", level)
    letters = W.code_word(system, x_minus(), part, steps).letters
    hn = system.space.h(n)
    return {letters[t:t + hn] for t in range(steps - hn + 1)}


def brute_lcs(a, b):
    """Longest common subsequence by trying every index subset of a."""
    for k in range(len(a), -1, -1):
        for idx in itertools.combinations(range(len(a)), k):
            sub = [a[i] for i in idx]
            it = iter(b)
            if all(any(x == y for y in it) for x in sub):
                return k
    return 0


def test_odometer_coding():
    sys_ = OdomutantSystem.of(identity_family(make_space({"kind": "explicit", "values": [3, 2, 3], "periodic": True})))
    part = W.partition_for(sys_, "P", 1)
    assert W.code_word(sys_, x_minus(), part, 6).letters == (0, 1, 2, 0, 1, 2)
    assert W.code_word(sys_, x_minus(), part, 0).letters == ()


def test_odometer_tower_word_enumerates_the_column():
    sys_ = OdomutantSystem.of(identity_family(const(3)))
    assert W.tower_word(sys_, "P", 1, 2, 1).letters == (0, 1, 2) * 3


def test_projection_to_blocks():
    sys_ = toy_systems()["feldman"]
    fine = W.code_word(sys_, x_minus(), W.partition_for(sys_, "P", 1), 300)
    coarse = W.code_word(sys_, x_minus(), W.partition_for(sys_, "P~", 1), 300)
    part = W.partition_for(sys_, "P~", 1)
    assert tuple(part.project(sys_.space, a) for a in fine.letters) == coarse.letters


@pytest.mark.parametrize("name", ["identity", "cyclic", "dyadic_swap", "entropy", "feldman"])
def test_tower_words_match_coding(name):
    sys_ = toy_systems()[name]
    sp = sys_.space
    for level in (1, 2):
        for n in range(level - 1, 4):
            if sp.h(n) > 10**4:
                break
            part = W.partition_for(sys_, "P", level)
            tw = W.TowerWords(sys_, "P", level, W.DEFAULT_LETTER_BUDGET)
            for x in range(sp.q(n)):
                assert tw.word(n, x) == W.code_word(sys_, W.bottom_point(n, x, sys_), part, sp.h(n)).letters


def test_block_words_are_c_to_one():
    sys_ = toy_systems()["feldman"]
    words = [W.tower_word(sys_, "P~", 1, 0, x).letters for x in range(sys_.space.q(0))]
    counts = {w: words.count(w) for w in set(words)}
    assert sorted(counts.values()) == [64, 64]


def test_feldman_block_words_follow_the_word_recursion():
    sys_ = toy_systems()["feldman"]
    params = sys_.family.feldman
    for n in (1, 2):
        expect = feldman_words(params, n).words
        for j in range(2):
            assert W.block_tower_word(sys_, 1, n, j).letters == expect[j]


def test_odometer_word_count():
    sys_ = OdomutantSystem.of(identity_family(make_space({"kind": "explicit", "values": [3, 2, 3], "periodic": True})))
    res = W.count_words(sys_, "P", 1, 2)
    assert res.count == 3


@pytest.mark.parametrize("level,n", sorted(ENTROPY_COUNTS))
def test_entropy_family_counts(level, n):
    sys_ = toy_systems()["entropy"]
    res = W.count_words(sys_, "P", level, n)
    assert res.count == ENTROPY_COUNTS[(level, n)]
    assert res.bounds_apply and res.within_bounds


def test_entropy_counts_agree_with_a_long_orbit():
    sys_ = toy_systems()["entropy"]
    sp = sys_.space
    for (level, n), count in ENTROPY_COUNTS.items():
        if n <= 2:
            assert len(orbit_windows(sys_, level, n, sp.h(n + 3) + sp.h(n))) == count


def test_pairwise_distinct_family_has_injective_column_words():
    sys_ = toy_systems()["entropy"]
    for n in (1, 2, 3):
        assert W.count_words(sys_, "P", 1, n, method="recursion").count == sys_.space.q(n)


def test_brute_count_needs_enough_levels():
    sys_ = OdomutantSystem.of(identity_family([3, 2, 3, 2]))
    with pytest.raises(PreconditionError):
        W.count_words(sys_, "P", 1, 2)


def test_kappa_bound_for_feldman_and_a_duplicated_family():
    fe = toy_systems()["feldman"]
    assert W.kappa_lower_bound(fe, 1, 1) == 2
    sp = const(4)
    dup = multiplicity_family(sp, lambda n: 2, lambda n: 2, lambda n: [[0, 1, 2, 3]] * 2)
    sys_ = OdomutantSystem.of(dup)
    assert W.kappa_lower_bound(sys_, 1, 1) == 1
    assert W.kappa_lower_bound(sys_, 1, 2) == Fraction(2, 2**4 * 2)


def test_entropy_estimates():
    odo = OdomutantSystem.of(identity_family(make_space({"kind": "explicit", "values": [3, 2, 3], "periodic": True})))
    rows = W.entropy_estimate(odo, 1, [1, 2, 3])
    assert [r.count for r in rows] == [3, 3, 3]
    assert W.entropy_estimate(odo, 1, []) == []
    ent = W.entropy_estimate(toy_systems()["entropy"], 1, [1, 2, 3])
    for r in ent:
        assert r.target <= r.estimate <= r.upper


def test_metric_examples():
    assert W.f_metric((0, 1, 0, 1), (1, 0, 1, 0)) == Fraction(1, 4)
    assert brute_lcs((0, 1, 0, 1), (1, 0, 1, 0)) == 3
    assert W.f_metric((1, 2, 3), (1, 2, 3)) == 0
    assert W.f_metric((0, 0), ("a", "b")) == 1
    assert W.d_metric((0, 1, 2, 3), (0, 1, 2, 4)) == 1
    assert W.d_metric_normalized((0, 1, 2, 3), (0, 1, 2, 4)) == Fraction(1, 4)
    assert W.d_metric((0, 1), (0, 1)) == 0


def test_f_below_normalized_hamming_on_random_pairs():
    rng = random.Random(5)
    for _ in range(1000):
        n = rng.randint(1, 12)
        a = [rng.randint(0, 2) for _ in range(n)]
        b = [rng.randint(0, 2) for _ in range(n)]
        assert W.f_metric(a, b) <= W.d_metric_normalized(a, b)


@given(st.lists(st.integers(0, 2), max_size=7), st.lists(st.integers(0, 2), max_size=7))
def test_lcs_matches_exhaustive_search(a, b):
    assert W.lcs_length(a, b) == brute_lcs(a, b)


@given(st.lists(st.integers(0, 3), max_size=30), st.lists(st.integers(0, 3), max_size=30))
def test_lcs_symmetric_and_wide_band_exact(a, b):
    k = W.lcs_length(a, b)
    assert k == W.lcs_length(b, a)
    assert W.lcs_length(a, b, band=len(a) + len(b)) == k
    assert k <= min(len(a), len(b))


@pytest.mark.parametrize("k", [1, 2])
@pytest.mark.parametrize("eps", [Fraction(1, 10), Fraction(1, 4)])
def test_odometer_lb0_pair_bound(k, eps):
    sys_ = OdomutantSystem.of(identity_family(const(2)))
    hk = sys_.space.h(k)
    N = math.ceil(2 * hk / eps)
    rep = W.lb0_report(sys_, "P", k, N, eps)
    assert not rep.partial
    assert rep.max_pairwise <= Fraction(2 * hk, N) <= eps
    assert rep.best_coverage == 1


def test_lb0_with_eps_one_is_trivial():
    sys_ = toy_systems()["entropy"]
    rep = W.lb0_report(sys_, "P", 1, 8, Fraction(1))
    assert rep.best_coverage == 1


def test_lb0_refuses_families_moving_zero():
    with pytest.raises(PreconditionError):
        W.realizable_words(toy_systems()["cyclic"], "P", 1, 4)


def test_realizable_masses_sum_to_one():
    sys_ = toy_systems()["entropy"]
    masses = W.realizable_words(sys_, "P", 1, 10)
    assert sum(masses.values()) == 1


def test_feldman_words_are_f_separated():
    words = feldman_words(FeldmanParams((2,)), 1).words
    m = W.f_matrix(words)
    assert m[0][0] == 0 and m[0][1] == m[1][0] > 0
