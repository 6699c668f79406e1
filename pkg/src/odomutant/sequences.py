"""Inductive constructions of defining sequences and their arithmetic side checks.

Everything that can be decided exactly is, with big integers. The rest goes
through mpmath logarithms, and an inequality is only ever reported as holding
when the gap beats the rounding margin at the precision used.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import mpmath

from .arith import (DEFAULT_PREC, GUARD_BITS, FactoredInt, Verdict, combine, decide_le, floor_hp, hp, hp_log,
                    is_prime, log_factorial, mp_str)
from .errors import ConfigError, InfeasibleError, PreconditionError, ResourceError, ValidationError
from .space import BaseSequence

CHECK_PREC = 256
MAX_SELECTION_PREC = 1 << 16
EXACT_FACTORIAL_LIMIT = 20000


def factored_space(values: Sequence[FactoredInt], descriptor: dict | None = None) -> BaseSequence:
    """A finite space whose q(n) are only known in factored form."""
    values = list(values)
    return BaseSequence("factored", factored_rule=lambda n: values[n], max_level=len(values),
                        descriptor=descriptor or {"kind": "factored", "rule": "built"})


@dataclass(frozen=True)
class SupernaturalSpec:
    """p_star carries the infinite exponent; ``primes`` lists the other factors with multiplicity."""

    p_star: int
    primes: tuple[int, ...] = ()

    def __post_init__(self):
        if not is_prime(self.p_star):
            raise ConfigError(f"{self.p_star} is not a prime")
        for p in self.primes:
            if not is_prime(p):
                raise ConfigError(f"{p} is not a prime")
            if p == self.p_star:
                raise ConfigError("the distinguished prime may not appear among the finite factors")

    def prod(self, lo: int, hi: int) -> int:
        """p_{lo+1} ... p_hi (1-based, empty product is 1)."""
        out = 1
        for p in self.primes[lo:hi]:
            out *= p
        return out


def _log_factorial_of(q: FactoredInt | int, prec: int) -> mpmath.mpf:
    """log((q-2)!) for an integer or a factored integer."""
    if isinstance(q, int):
        return log_factorial(q - 2, prec)
    if q.log2_upper() < 60:
        return log_factorial(q.expand() - 2, prec)
    with mpmath.workprec(prec + GUARD_BITS):
        return mpmath.loggamma(hp(q, prec) - 1)


def smallest_K(p_star: int) -> int:
    """Least power K of p_star with (q-2)! >= K for every q >= K."""
    K = p_star
    while math.factorial(K - 2) < K:
        K *= p_star
    return K


# -- the finite-entropy construction ---------------------------------------


@dataclass
class LevelCheck:
    name: str
    verdict: Verdict
    lhs: str
    rhs: str

    def to_json(self) -> dict:
        return {"check": self.name, "verdict": self.verdict.value, "lhs": self.lhs, "rhs": self.rhs}


@dataclass
class ChoiceLevel:
    n: int
    q: FactoredInt
    i: int
    j: int
    checks: list[LevelCheck]
    proof_window_index: int | None = None
    selection_prec: int | None = None

    @property
    def verdict(self) -> Verdict:
        return combine(c.verdict for c in self.checks)

    def to_json(self) -> dict:
        e = self.i
        return {"n": self.n, "q": self.q.to_json(), "i": str(e), "j": self.j, "verdict": self.verdict.value,
                "checks": [c.to_json() for c in self.checks],
                "proof_window_index": None if self.proof_window_index is None else str(self.proof_window_index),
                "selection_precision_bits": self.selection_prec}


@dataclass
class ChoiceResult:
    alpha: Fraction
    spec: SupernaturalSpec
    K: int
    levels: list[ChoiceLevel]
    precision: int
    selection: str

    @property
    def q(self) -> list[FactoredInt]:
        return [lv.q for lv in self.levels]

    @property
    def verdict(self) -> Verdict:
        return combine(lv.verdict for lv in self.levels)

    def space(self) -> BaseSequence:
        return factored_space(self.q, {"kind": "factored", "rule": "choiceqn", "alpha": str(self.alpha)})

    def to_json(self) -> dict:
        return {"alpha": str(self.alpha), "p_star": self.spec.p_star, "primes": list(self.spec.primes), "K": self.K,
                "precision_bits": self.precision, "selection": self.selection, "verdict": self.verdict.value,
                "levels": [lv.to_json() for lv in self.levels]}


def _check(name: str, a: mpmath.mpf, b: mpmath.mpf, prec: int) -> LevelCheck:
    """Record a <= b."""
    return LevelCheck(name, decide_le(a, b, prec), mp_str(a), mp_str(b))


def _select_prec(h_next: FactoredInt, extra: int = 64) -> int:
    need = h_next.log2_upper() + extra
    if need > MAX_SELECTION_PREC:
        size = f"{need} bits" if need < 10**9 else f"a {len(str(need))}-digit number of bits"
        raise ResourceError(f"choosing the next exponent needs {size} of precision (cap {MAX_SELECTION_PREC})")
    return max(need, DEFAULT_PREC)


def build_choiceqn(alpha, spec: SupernaturalSpec, depth: int, K: int | None = None, prec: int = CHECK_PREC,
                   selection: str = "midpoint") -> ChoiceResult:
    """Levels q_0..q_depth with log q_n / h_n bracketed around alpha.

    q_0 = K^{i_0} with the least admissible i_0. Each later level is
    K^{i'} times the next run of finite primes; by default i' aims at the
    middle of the window [alpha + 5/h_{n+1}, alpha + 2/h_n], which keeps
    both sides of the check decidable at ``prec`` bits. With
    ``selection="proof"`` the largest admissible i' just below
    alpha + 2/h_n is used instead. The index that lands in that narrow
    window is reported either way.
    """
    alpha = Fraction(alpha)
    if alpha <= 0:
        raise ConfigError("alpha must be positive")
    if selection not in ("midpoint", "proof"):
        raise ConfigError(f"unknown selection rule {selection!r}")
    if depth < 0:
        raise ConfigError("depth must be non-negative")
    ps = spec.p_star
    K = smallest_K(ps) if K is None else K
    if K < 5 or math.factorial(K - 2) < K or FactoredInt.from_int(K).exponents.keys() != {ps}:
        raise ConfigError(f"K={K} must be a power of {ps} with (K-2)! >= K and K >= 5")
    logK_exact = FactoredInt.from_int(K)
    wp = prec + GUARD_BITS
    with mpmath.workprec(wp):
        a = hp(alpha, prec)
        logK = hp_log(K, prec)
        # level 0
        i0 = 1
        while not (K**i0 > 2 * math.log(ps) / float(alpha) and i0 * math.log(K) >= float(alpha) + 5):
            i0 += 1
        # the float scan only proposes; the checks below are what certify
        q0 = logK_exact ** i0
        checks = [
            _check("q_0 > (2/alpha) log p_star", 2 * mpmath.log(ps) / a, hp(q0, prec), prec),
            _check("log q_0 >= alpha + 5", a + 5, q0.log(prec), prec),
        ]
        levels = [ChoiceLevel(0, q0, i0, 0, checks)]
    N = len(spec.primes)
    h = FactoredInt.unit()
    for n in range(depth):
        prev = levels[-1]
        qn = prev.q
        h_prev = h
        h = h * qn  # h_{n+1}
        with mpmath.workprec(wp):
            log_h = h.log(prec)
            lf = _log_factorial_of(qn, prec)
            # j_{n+1}: greatest k >= j_n with K prod <= (q_n-2)! and log prod / h_{n+1} <= alpha/2
            j = prev.j
            while j < N:
                trial = spec.prod(prev.j, j + 1)
                ok1 = decide_le(hp_log(K * trial, prec), lf, prec)
                ok2 = decide_le(hp_log(trial, prec) - log_h, mpmath.log(a / 2), prec)
                if ok1 is Verdict.UNDECIDED or ok2 is Verdict.UNDECIDED:
                    raise ResourceError(f"prime bookkeeping at level {n + 1} is undecidable at {prec} bits")
                if ok1 is Verdict.FAILS or ok2 is Verdict.FAILS:
                    break
                j += 1
            extra = spec.prod(prev.j, j)
        sel_prec = _select_prec(h)
        with mpmath.workprec(sel_prec + GUARD_BITS):
            H = hp(h, sel_prec)
            Hp = hp(h_prev, sel_prec)
            a_s = hp(alpha, sel_prec)
            lK = hp_log(K, sel_prec)
            lx = hp_log(extra, sel_prec)
            lo, hi = a_s + 5 / H, a_s + 2 / Hp
            # alpha_i = (i log K + log extra) / h_{n+1}
            narrow = int(mpmath.floor((hi * H - lx) / lK))
            if selection == "midpoint":
                i_next = int(mpmath.nint(((lo + hi) / 2 * H - lx) / lK))
            else:
                i_next = narrow
        if i_next < 1:
            raise InfeasibleError(f"no admissible exponent at level {n + 1}")
        q_next = logK_exact ** i_next * FactoredInt.from_int(extra) if extra > 1 else logK_exact ** i_next
        with mpmath.workprec(wp):
            Hc = hp(h, prec)
            Hpc = hp(h_prev, prec)
            rate = q_next.log(prec) / Hc
            checks = [
                _check("K <= q_{n+1}", logK, q_next.log(prec), prec),
                _check("q_{n+1} <= (q_n - 2)!", q_next.log(prec), lf, prec),
                _check("alpha + 5/h_{n+1} <= log q_{n+1} / h_{n+1}", a + 5 / Hc, rate, prec),
                _check("log q_{n+1} / h_{n+1} <= alpha + 2/h_n", rate, a + 2 / Hpc, prec),
            ]
            if j < prev.j:
                checks.append(LevelCheck("j non-decreasing", Verdict.FAILS, str(prev.j), str(j)))
        levels.append(ChoiceLevel(n + 1, q_next, i_next, j, checks, narrow, sel_prec))
    return ChoiceResult(alpha, spec, K, levels, prec, selection)


# -- the infinite-entropy construction -------------------------------------


@dataclass
class EntropyLevel:
    n: int
    c: int
    qt: FactoredInt
    q: FactoredInt
    chi: FactoredInt | None
    kappa: FactoredInt | None
    j: int
    h: FactoredInt

    def to_json(self) -> dict:
        enc = lambda v: None if v is None else v.to_json()  # noqa: E731
        return {"n": self.n, "c": self.c, "qtilde": enc(self.qt), "q": enc(self.q), "chi": enc(self.chi),
                "kappa": enc(self.kappa), "j": self.j, "h": enc(self.h)}


@dataclass
class InfiniteEntropyResult:
    spec: SupernaturalSpec
    levels: list[EntropyLevel]
    checks: list[LevelCheck] = field(default_factory=list)

    @property
    def verdict(self) -> Verdict:
        return combine(c.verdict for c in self.checks)

    def space(self) -> BaseSequence:
        return factored_space([lv.q for lv in self.levels], {"kind": "factored", "rule": "infinite_entropy"})

    def to_json(self) -> dict:
        return {"p_star": self.spec.p_star, "primes": list(self.spec.primes), "verdict": self.verdict.value,
                "levels": [lv.to_json() for lv in self.levels], "checks": [c.to_json() for c in self.checks]}


def multinomial_bound(q: int, qt: int, c: int) -> int:
    """(q-2)! / (c!^(qt-2) (c-1)!^2), exactly."""
    num = math.factorial(q - 2)
    den = math.factorial(c) ** (qt - 2) * math.factorial(c - 1) ** 2
    value, rem = divmod(num, den)
    if rem:
        raise ValidationError("the block count is not an integer")
    return value


def greatest_power_le(p: int, x: int) -> int:
    """Exponent e with p^e <= x < p^(e+1), for x >= 1."""
    if x < 1:
        raise ValidationError("need x >= 1")
    e, acc = 0, p
    while acc <= x:
        acc *= p
        e += 1
    return e


def _log_multinomial(q, qt, c: int, prec: int) -> mpmath.mpf:
    with mpmath.workprec(prec + GUARD_BITS):
        return _log_factorial_of(q, prec) - (hp(qt, prec) - 2) * log_factorial(c, prec) - 2 * log_factorial(c - 1, prec)


def build_infinite_entropy(p_star: int, primes: Iterable[int], depth: int, prec: int = CHECK_PREC) -> InfiniteEntropyResult:
    """c_n = p*^n, q~_0 = p*, chi and kappa by the greatest-power recursion.

    Small levels are exact; once (q_n - 2)! is out of reach the exponent of
    chi is taken from a log-gamma evaluation, which must floor cleanly.
    """
    spec = SupernaturalSpec(p_star, tuple(primes))
    ps = spec.p_star
    N = len(spec.primes)
    qt0 = FactoredInt.prime_power(ps, 1)
    h = FactoredInt.unit()
    levels = [EntropyLevel(0, 1, qt0, qt0, None, None, 0, h)]
    checks: list[LevelCheck] = []
    for n in range(depth):
        cur = levels[-1]
        c = cur.c
        h = h * cur.q  # h_{n+1}
        if cur.q.log2_upper() <= 64 and cur.q.expand() <= EXACT_FACTORIAL_LIMIT:
            qv, qtv = cur.q.expand(), cur.qt.expand()
            e = greatest_power_le(ps, multinomial_bound(qv, qtv, c))
        else:
            lm = _log_multinomial(cur.q, cur.qt, c, prec)
            with mpmath.workprec(prec + GUARD_BITS):
                e = floor_hp(lm / mpmath.log(ps), prec)
            if e is None:
                raise ResourceError(f"the exponent of chi_{n + 1} is undecidable at {prec} bits")
        chi = FactoredInt.prime_power(ps, e)
        if h.log2_upper() > (1 << 40):
            raise ResourceError("h is too large for the prime bookkeeping")
        # j_{n+1}: greatest k >= j_n with prod p_j <= p*^{h_{n+1}}
        hv = h.expand(max_bits=1 << 26)
        j = cur.j
        while j < N and _le_power(spec.prod(cur.j, j + 1), ps, hv):
            j += 1
        kap = FactoredInt.prime_power(ps, hv) * FactoredInt.from_int(spec.prod(cur.j, j))
        qt = kap * chi
        c_next = ps ** (n + 1)
        q = qt * c_next
        levels.append(EntropyLevel(n + 1, c_next, qt, q, chi, kap, j, h))
        # both hold with possible equality, so they are settled on exponents rather than logs
        checks.append(LevelCheck(f"h_{n + 1} log p* <= log kappa_{n + 1}",
                                 Verdict.HOLDS if kap.valuation(ps) >= hv else Verdict.FAILS,
                                 f"{ps}^{hv}", repr(kap)))
        checks.append(LevelCheck(f"log kappa_{n + 1} <= log q_{n + 1}",
                                 Verdict.HOLDS if divides(kap, q) else Verdict.FAILS, repr(kap), repr(q)))
    return InfiniteEntropyResult(spec, levels, checks)


def divides(a: FactoredInt, b: FactoredInt) -> bool:
    eb = b.exponents
    return all(eb.get(p, 0) >= e for p, e in a.exponents.items())


def _le_power(x: int, p: int, e: int) -> bool:
    """x <= p^e, without expanding p^e when it obviously wins."""
    if e * (p.bit_length() - 1) > x.bit_length():
        return True
    return x <= p**e


# -- side lemmas -------------------------------------------------------------


@dataclass
class PowerKReport:
    lhs: int
    rhs: mpmath.mpf
    verdict: Verdict

    @property
    def ok(self) -> bool:
        return self.verdict is Verdict.HOLDS

    def to_json(self) -> dict:
        return {"lhs": str(self.lhs), "rhs": mp_str(self.rhs), "verdict": self.verdict.value}


def check_powerK(p: int, qt: int, c: int, prec: int = DEFAULT_PREC) -> PowerKReport:
    """Greatest power of p below the block count against (1/p)(1/qt^2)(1/(e c))^qt qt^q."""
    if p < 2:
        raise ConfigError("p must be at least 2")
    q = qt * c
    if q < 3 or qt < 2 or c < 1:
        raise ConfigError("need q = qt*c >= 3 with qt >= 2 and c >= 1")
    lhs = p ** greatest_power_le(p, multinomial_bound(q, qt, c))
    with mpmath.workprec(prec + GUARD_BITS):
        rhs = mpmath.mpf(qt) ** q / (p * mpmath.mpf(qt) ** 2 * (mpmath.e * c) ** qt)
    return PowerKReport(lhs, rhs, decide_le(rhs, mpmath.mpf(lhs), prec))


@dataclass
class SummableReport:
    m: int
    beta: str
    precondition: Verdict
    rows: list[dict]
    first_failure: int | None
    precision: int

    @property
    def verdict(self) -> Verdict:
        if self.precondition is not Verdict.HOLDS:
            return self.precondition
        return combine(Verdict(r["verdict"]) for r in self.rows)

    def to_json(self) -> dict:
        return {"m": self.m, "beta": self.beta, "precondition": self.precondition.value, "rows": self.rows,
                "first_failure": self.first_failure, "precision_bits": self.precision, "verdict": self.verdict.value}


def check_summable(space: BaseSequence, m: int, beta, n_range: Iterable[int], prec: int = DEFAULT_PREC) -> SummableReport:
    """1 / log^(m)(q_{n+m}) <= exp(-beta h_n), compared after taking logs once more.

    The precondition log q_n / h_n >= beta is checked on every level the
    inequality touches; when it does not hold the rows are left empty.
    """
    if m < 0:
        raise ConfigError("m must be non-negative")
    n_range = list(n_range)
    wp = prec + GUARD_BITS
    with mpmath.workprec(wp):
        b = hp(Fraction(beta), prec) if not isinstance(beta, mpmath.mpf) else beta
        touched = sorted({k for n in n_range for k in (n, n + m)})
        pre = combine(decide_le(b * hp(space.h_factored(k), prec), space.log_q(k, prec), prec) for k in touched)
        rows, first = [], None
        if pre is Verdict.HOLDS:
            for n in n_range:
                bh = b * hp(space.h_factored(n), prec)
                val = space.log_q(n + m, prec)  # log^(1)
                verdict = None
                for _ in range(m):
                    if val <= 0:
                        verdict = Verdict.FAILS
                        break
                    val = mpmath.log(val)
                if verdict is None:
                    verdict = decide_le(bh, val, prec)
                if verdict is Verdict.FAILS and first is None:
                    first = n
                rows.append({"n": n, "log_iterate": mp_str(val), "beta_h": mp_str(bh), "verdict": verdict.value})
    return SummableReport(m, str(beta), pre, rows, first, prec)


# -- exponent sums of the classical scale -------------------------------------


def feldman_exponents(n: int, offset: int = 10) -> int:
    """S_n = sum_{i=1}^n (i + offset - 1)(2^(i + offset + 1) + 3), so h_n = 2^{S_n}."""
    if n < 0:
        raise ConfigError("n must be non-negative")
    return sum((i + offset - 1) * (2 ** (i + offset + 1) + 3) for i in range(1, n + 1))


def exponent_sign(p: Fraction, n: int, offset: int = 10) -> int:
    """Sign of p S_n - S_{n-1}, exactly."""
    p = Fraction(p)
    v = p.numerator * feldman_exponents(n, offset) - p.denominator * feldman_exponents(n - 1, offset)
    return (v > 0) - (v < 0)


def exponent_sign_table(p: Fraction, n_range: Iterable[int], offset: int = 10) -> dict[int, int]:
    return {n: exponent_sign(p, n, offset) for n in n_range}


def exponent_ratio_table(n_range: Iterable[int], offset: int = 10, prec: int = DEFAULT_PREC) -> list[dict]:
    """S_n / (n 2^n) and the same after subtracting the leading term, to watch them settle."""
    rows = []
    lead = 2 ** (offset + 2)
    with mpmath.workprec(prec + GUARD_BITS):
        for n in n_range:
            if n < 1:
                continue
            s = feldman_exponents(n, offset)
            r = mpmath.mpf(s) / (n * mpmath.mpf(2) ** n)
            d = (mpmath.mpf(s) - lead * n * mpmath.mpf(2) ** n) / mpmath.mpf(2) ** n
            rows.append({"n": n, "S_n": str(s), "S_over_n2n": mp_str(r, 20), "remainder_over_2n": mp_str(d, 20)})
    return rows
