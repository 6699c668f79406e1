"""One test per acceptance criterion, each printing a single PASS/FAIL line."""
import math
import time
from fractions import Fraction
from itertools import product

import mpmath
import pytest

from conftest import const, toy_systems
from odomutant import words as W
from odomutant.arith import FactoredInt, Verdict
from odomutant.bratteli import (check_intertwining, is_properly_ordered, materialize, max_path, min_path,
                                odometer_diagram, odometer_path, vershik_apply)
from odomutant.cocycles import verify_orbit_equivalence
from odomutant.dynamics import OdomutantSystem, apply_S
from odomutant.errors import Undetermined
from odomutant.families import entropy_family, identity_family
from odomutant.measure import measure_probe, measure_probe_by_levels
from odomutant.sequences import SupernaturalSpec, build_choiceqn, build_infinite_entropy, exponent_sign_table
from odomutant.space import make_space
from odomutant.spectrum import check_eigen_relation, check_pullback, lemma_complex_sweep

NAMES = ["identity", "cyclic", "dyadic_swap", "entropy", "feldman"]


@pytest.fixture(scope="module")
def systems():
    return toy_systems()


def test_c1_orbit_equivalence_identities(accept, systems):
    start = time.perf_counter()
    reps = {name: verify_orbit_equivalence(systems[name], 1000, seed=2024) for name in NAMES}
    elapsed = time.perf_counter() - start
    failures = sum(len(r.failures) for r in reps.values())
    checked = {name: r.checked for name, r in reps.items()}
    ok = failures == 0 and elapsed < 10 and all(c >= 1000 for c in checked.values())
    accept("C1", ok, f"T=S^c_T and S=T^c_S on {checked} samples, {failures} failures, {elapsed:.2f}s")
    assert ok


def test_c2_cocycle_bound(accept, systems):
    reps = {name: verify_orbit_equivalence(systems[name], 1000, seed=7) for name in NAMES}
    bad = sum(len(r.bound_violations) for r in reps.values())
    checked = sum(r.checked for r in reps.values())
    ok = bad == 0 and checked > 0
    accept("C2", ok, f"|c_T| <= h(N+(psi p)+1) on {checked} determined samples, {bad} exceptions")
    assert ok


def test_c3_tower_words_equal_coding(accept, systems):
    compared = mismatches = 0
    for name in NAMES:
        sys_ = systems[name]
        sp = sys_.space
        kinds = ["P", "P~"] if sys_.family.multiplicity is not None else ["P"]
        for kind in kinds:
            for level in (1, 2):
                part = W.partition_for(sys_, kind, level)
                tw = W.TowerWords(sys_, kind, level)
                n = level - 1
                while sp.h(n) <= 10**4:
                    for x in range(sp.q(n)):
                        coded = W.code_word(sys_, W.bottom_point(n, x, sys_), part, sp.h(n)).letters
                        compared += 1
                        mismatches += tw.word(n, x) != coded
                    n += 1
    ok = mismatches == 0 and compared > 0
    accept("C3", ok, f"{compared} tower words against orbit coding, {mismatches} mismatches")
    assert ok


def test_c4_word_count_sandwich(accept):
    sys_ = OdomutantSystem.of(entropy_family(const(6), 1))
    start = time.perf_counter()
    rows = []
    for n in (1, 2, 3):
        for level in range(1, n + 1):
            res = W.count_words(sys_, "P", level, n, "brute")
            rows.append((level, n, res.lower, res.count, res.upper, res.bounds_apply))
    elapsed = time.perf_counter() - start
    ok = all(applies and lo <= c <= hi for _, _, lo, c, hi, applies in rows) and elapsed < 60
    accept("C4", ok, "q_n <= N <= h_{n-1} q_n q_{n-1}^2 2^q_{n-1} at "
           + ", ".join(f"(l={lv},n={n}):{c}" for lv, n, _, c, _, _ in rows) + f" in {elapsed:.1f}s")
    assert ok


def test_c5_odometer_lb0(accept):
    spaces = {"2": const(2), "323": make_space({"kind": "explicit", "values": [3, 2, 3], "periodic": True})}
    cases = worst_ratio = 0
    ok = True
    for sp in spaces.values():
        sys_ = OdomutantSystem.of(identity_family(sp))
        for k in (1, 2):
            hk = sp.h(k)
            for eps in (Fraction(1, 10), Fraction(1, 4)):
                N0 = math.ceil(2 * hk / eps)
                for N in (N0, N0 + 7):
                    rep = W.lb0_report(sys_, "P", k, N, eps)
                    bound = Fraction(2 * hk, N)
                    cases += 1
                    ok &= not rep.partial and rep.max_pairwise is not None and rep.max_pairwise <= bound
                    worst_ratio = max(worst_ratio, rep.max_pairwise / bound)
    accept("C5", ok, f"every realizable pair has f_N <= 2h_k/N in {cases} cases (largest f_N/bound {float(worst_ratio):.3f})")
    assert ok


@pytest.mark.xfail(strict=True, reason="49/100 S_n - S_{n-1} is positive for n <= 42; it turns negative only from 43")
def test_c6_exponent_signs(accept):
    below = exponent_sign_table(Fraction(49, 100), range(12, 51))
    above = exponent_sign_table(Fraction(51, 100), range(12, 51))
    positive = [n for n, s in below.items() if s >= 0]
    tail_ok = all(s > 0 for n, s in above.items() if n >= 12)
    ok = not positive and tail_ok
    accept("C6", ok, f"p=51/100 positive on 12..50: {tail_ok}; p=49/100 negative on 12..50 fails at n={positive[:1]}"
           f"...{positive[-1:]} ({len(positive)} values), negative only on 43..50")
    assert ok


def test_c7_choiceqn_bracketing(accept):
    res = build_choiceqn(1, SupernaturalSpec(2, (3,)), 2, prec=256)
    q0 = res.levels[0].q
    verdicts = [lv.verdict for lv in res.levels]
    ok = q0.expand() == 512 and all(v is Verdict.HOLDS for v in verdicts) and res.precision == 256
    accept("C7", ok, f"q_0={q0.expand()}, q_1={res.levels[1].q!r}, q_2=8^i with i of {len(str(res.levels[2].i))} digits; "
           f"level verdicts {[v.value for v in verdicts]} at 256 bits")
    assert ok


def _naive_first_level(p_star, primes):
    q0 = p_star
    bound = math.factorial(q0 - 2)  # c_0 = 1, so the denominator is 1
    chi = max(p_star**e for e in range(0, bound.bit_length() + 1) if p_star**e <= bound)
    j = max(k for k in range(len(primes) + 1) if math.prod(primes[:k]) <= p_star**q0)
    kappa = p_star**q0 * math.prod(primes[:j])
    return chi, j, kappa, kappa * chi, p_star * kappa * chi


def test_c8_infinite_entropy_recursion(accept):
    res = build_infinite_entropy(5, (3, 7), 1)
    lv = res.levels[1]
    got = (lv.chi.expand(), lv.j, lv.kappa.expand(), lv.qt.expand(), lv.q.expand())
    naive = _naive_first_level(5, (3, 7))
    with mpmath.workprec(128):
        log_ok = mpmath.log(lv.kappa.expand()) >= lv.h.expand() * mpmath.log(5)
    ok = got == naive == (5, 2, 65625, 328125, 1640625) and log_ok
    accept("C8", ok, f"(chi_1, j_1, kappa_1, q~_1, q_1) = {got}, naive {naive}, log kappa_1 >= h_1 log 5: {log_ok}")
    assert ok


def test_c9_bratteli(accept, systems):
    # prefixes that are maximal up to depth 6 have no determined successor, so draw a few extra
    reps = {name: check_intertwining(systems[name], 6, 1100, seed=99) for name in NAMES}
    fails = sum(len(r.failures) for r in reps.values())
    checked = {name: r.checked for name, r in reps.items()}
    sp = make_space({"kind": "explicit", "values": [3, 2, 3], "periodic": True})
    d = odometer_diagram(sp, 8)
    rng = __import__("random").Random("c9")
    vershik_bad = vershik_checked = 0
    for _ in range(1000):
        p = sp.random_point(rng, 6)
        try:
            want = apply_S(sp, p)
        except Undetermined:
            continue
        got = vershik_apply(d, odometer_path(sp, p, 6))
        vershik_checked += 1
        try:
            vershik_bad += [e[2] for e in materialize(d, got, 6)] != list(sp.digits(want, 6))
        except Undetermined:
            vershik_bad += 1
    wrap = is_properly_ordered(d) and materialize(d, vershik_apply(d, max_path(d))) == materialize(d, min_path(d))
    ok = fails == 0 and vershik_bad == 0 and wrap and min(checked.values()) >= 1000
    accept("C9", ok, f"Psi T = T_B Psi on {checked} prefixes at depth 6 ({fails} failures); odometer Vershik = S on "
           f"{vershik_checked} prefixes ({vershik_bad} mismatches); x_max -> x_min: {wrap}")
    assert ok


def test_c10_spectrum(accept, systems):
    fails = checked = 0
    for name in NAMES:
        sys_ = systems[name]
        for n in range(5):
            for rep in (check_eigen_relation(sys_.space, n, 1000, seed=n), check_pullback(sys_, n, 1000, seed=n)):
                fails += len(rep.failures)
                checked += rep.checked
    sweep = lemma_complex_sweep(10_000, seed=10)
    ok = fails == 0 and sweep.cases == 10_000 and not sweep.violations and not sweep.undecided
    accept("C10", ok, f"eigen relation and pullback: {checked} checks, {fails} failures; counting lemma: "
           f"{sweep.cases} cases, {len(sweep.violations)} violations, {len(sweep.undecided)} undecided")
    assert ok


def test_c11_measure_probe(accept, systems):
    done, bad = [], []
    for name in NAMES:
        sys_ = systems[name]
        for level in range(4):
            reports = []
            if sys_.space.h(level + 2) <= 1 << 20:
                # full enumeration, with F compared to T on every prefix, at L = level and level + 1
                reports += [measure_probe(sys_, level, L) for L in {max(level, 1), level + 1}]
            elif sys_.space.h(level + 1) <= 1 << 20:
                reports.append(measure_probe(sys_, level))
            reports.append(measure_probe_by_levels(sys_, level, samples=2000, seed=level))
            done.append(f"{name}:{level}")
            if not all(r.ok for r in reports):
                bad.append(f"{name}:{level}")
    ok = not bad
    accept("C11", ok, f"pullback measure = cylinder measure exactly for every l<=3 cylinder on {len(NAMES)} systems "
           f"({len(done)} system-levels, failures {bad})")
    assert ok
