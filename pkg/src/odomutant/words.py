"""Coding maps, tower words, word counts, the f and d metrics and an LB0 checker."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import mpmath

from .arith import DEFAULT_PREC, GUARD_BITS
from .dynamics import OdomutantSystem, apply_T
from .errors import ConfigError, PreconditionError, ResourceError, Undetermined
from .families import entropy_index, kappa
from .space import Partition, Point, Tail, make_partition

DEFAULT_LETTER_BUDGET = 1 << 23


@dataclass(frozen=True)
class Word:
    letters: tuple[int, ...]
    atoms: int | None = None

    def __post_init__(self):
        if self.atoms is not None and any(not 0 <= a < self.atoms for a in self.letters):
            raise ConfigError("word letter outside its partition")

    def __len__(self) -> int:
        return len(self.letters)

    def project(self, fine: Partition, coarse: Partition, space) -> "Word":
        """Letterwise image of a P(l)-word in the block-collapsed partition."""
        return Word(tuple(coarse.project(space, a) for a in self.letters), coarse.atom_count(space))


def partition_for(system: OdomutantSystem, kind: str, level: int) -> Partition:
    return make_partition(system.space, kind, level, system.family.multiplicity)


def code_word(system: OdomutantSystem, p: Point, partition: Partition, length: int) -> Word:
    """The atoms visited by p, Tp, ..., T^{length-1} p."""
    sp = system.space
    letters = []
    for j in range(length):
        if j:
            p = apply_T(system, p)
        letters.append(partition.atom_of_point(sp, p))
    return Word(tuple(letters), partition.atom_count(sp))


def bottom_point(n: int, x_n: int, system: OdomutantSystem | None = None) -> Point:
    """The bottom of the level-n column over x_n: the point whose psi-prefix is 0, ..., 0.

    Without a system (or for a family fixing 0) that is [0, ..., 0, x_n].
    """
    if system is None or system.family.fixes_zero:
        return Point((0,) * n + (x_n,), Tail.MIN)
    fam = system.family
    y = [0] * n + [x_n]
    for i in range(n - 1, -1, -1):
        y[i] = fam.sigma_inv(i, y[i + 1], 0)
    return Point(tuple(y), Tail.MIN)


class TowerWords:
    """W^(n)_{x_n} for every n >= l-1, built by concatenation and memoised.

    T only moves digits below n inside a level-n column, so the word read
    from the column bottom depends on x_n alone.
    """

    def __init__(self, system: OdomutantSystem, kind: str, level: int, letter_budget: int = DEFAULT_LETTER_BUDGET):
        if level < 1:
            raise ConfigError("partition level must be at least 1")
        self.system = system
        self.partition = partition_for(system, kind, level)
        self.level = level
        self.budget = letter_budget
        self._memo: dict[tuple[int, int], tuple[int, ...]] = {}

    def _base(self, x: int) -> tuple[int, ...]:
        sp, fam = self.system.space, self.system.family
        n = self.level - 1
        out = []
        for j in range(sp.h(n)):
            k = sp.to_digits(j, n)
            y = [0] * n + [x]
            for i in range(n - 1, -1, -1):
                y[i] = fam.sigma_inv(i, y[i + 1], k[i])
            out.append(self.partition.atom_index(sp, y))
        return tuple(out)

    def word(self, n: int, x: int) -> tuple[int, ...]:
        if n < self.level - 1:
            raise ConfigError(f"tower words start at level {self.level - 1}")
        sp = self.system.space
        if sp.h(n) > self.budget:
            raise ResourceError(f"a level-{n} tower word has {sp.h(n)} letters (budget {self.budget})")
        key = (n, x)
        if key not in self._memo:
            if n == self.level - 1:
                self._memo[key] = self._base(x)
            else:
                inv = self.system.family.sigma_inv
                parts = [self.word(n - 1, inv(n - 1, x, k)) for k in range(sp.q(n - 1))]
                self._memo[key] = tuple(a for part in parts for a in part)
        return self._memo[key]


def tower_word(system: OdomutantSystem, kind: str, level: int, n: int, x_n: int,
               letter_budget: int = DEFAULT_LETTER_BUDGET) -> Word:
    tw = TowerWords(system, kind, level, letter_budget)
    return Word(tw.word(n, x_n), tw.partition.atom_count(system.space))


def block_tower_word(system: OdomutantSystem, level: int, n: int, j: int,
                     letter_budget: int = DEFAULT_LETTER_BUDGET) -> Word:
    """The P~(l) tower word of block j at level n (any representative digit)."""
    mult = system.family.multiplicity
    if mult is None:
        raise PreconditionError("block words need a multiplicity structure")
    return tower_word(system, "P~", level, n, mult.block(n, j).start, letter_budget)


# -- counting ------------------------------------------------------------------


@dataclass
class WordCountResult:
    level: int
    n: int
    method: str
    count: int
    log_count_rate: mpmath.mpf
    lower: int | None
    upper: int | None
    bounds_apply: bool
    notes: list[str] = field(default_factory=list)

    @property
    def within_bounds(self) -> bool | None:
        if not self.bounds_apply or self.lower is None or self.upper is None:
            return None
        return self.lower <= self.count <= self.upper

    def to_json(self) -> dict:
        return {"level": self.level, "n": self.n, "method": self.method, "count": self.count,
                "log_count_over_h": mpmath.nstr(self.log_count_rate, 20),
                "lower_bound": self.lower, "upper_bound": self.upper,
                "bounds_apply": self.bounds_apply, "within_bounds": self.within_bounds, "notes": self.notes}


def sandwich_bounds(space, n: int) -> tuple[int, int]:
    """q_n and h_{n-1} q_n q_{n-1}^2 2^{q_{n-1}}."""
    if n < 1:
        raise ConfigError("the word-count bounds need n >= 1")
    q, qp = space.q(n), space.q(n - 1)
    return q, space.h(n - 1) * q * qp * qp * 2**qp


def _pairwise_distinct(system: OdomutantSystem, n: int) -> bool:
    fam, sp = system.family, system.space
    return all(len(set(fam.tables(k))) == sp.q(k + 1) for k in range(n + 1))


def _is_entropy_shape(system: OdomutantSystem, n: int) -> bool:
    """Pairwise distinct, fixing 0 and every digit above i_k + 1 at levels up to n."""
    fam, sp = system.family, system.space
    if not _pairwise_distinct(system, n):
        return False
    for k in range(n + 1):
        q = sp.q(k)
        i_k = entropy_index(q, sp.q(k + 1))
        for t in fam.tables(k):
            if t[0] != 0 or any(t[x] != x for x in range(i_k + 1, q)):
                return False
    return True


def brute_words(system: OdomutantSystem, kind: str, level: int, n: int,
                letter_budget: int = DEFAULT_LETTER_BUDGET) -> set[tuple[int, ...]]:
    """Every h(n)-word of every point, by coding orbits through the dynamics.

    Each window sits inside some column of height h(n+1), possibly crossing
    its top; past the top the orbit always enters the level-n column over 0
    (the family fixes 0), so coding h(n+1)+h(n)-1 steps from every bottom
    [0,...,0,a]_{n+2} with zeros above covers all of them.
    """
    sp = system.space
    if not system.family.fixes_zero:
        raise PreconditionError("brute counting covers families fixing 0 only")
    if n < level - 1:
        raise ConfigError("need n >= l - 1")
    part = partition_for(system, kind, level)
    span = sp.h(n + 1) + sp.h(n) - 1
    if sp.q(n + 1) * span > letter_budget:
        raise ResourceError(f"brute count at n={n} needs {sp.q(n + 1) * span} letters (budget {letter_budget}); h(n)={sp.h(n)}")
    hn = sp.h(n)
    seen: set[tuple[int, ...]] = set()
    for a in range(sp.q(n + 1)):
        try:
            letters = code_word(system, bottom_point(n + 1, a), part, span).letters
        except Undetermined as exc:
            raise PreconditionError(f"brute count at n={n} needs more levels of the space: {exc}") from None
        for t in range(sp.h(n + 1)):
            seen.add(letters[t:t + hn])
    return seen


def count_words(system: OdomutantSystem, kind: str, level: int, n: int, method: str = "brute",
                letter_budget: int = DEFAULT_LETTER_BUDGET, prec: int = DEFAULT_PREC) -> WordCountResult:
    sp = system.space
    notes = []
    if method == "brute":
        count = len(brute_words(system, kind, level, n, letter_budget))
    elif method == "recursion":
        tw = TowerWords(system, kind, level, letter_budget)
        if sp.q(n) * sp.h(n) > letter_budget:
            raise ResourceError(f"recursion count at n={n} needs {sp.q(n) * sp.h(n)} letters; h(n)={sp.h(n)}")
        count = len({tw.word(n, x) for x in range(sp.q(n))})
        notes.append("counts column words only: a lower-bound surrogate for the full word count")
    else:
        raise ConfigError(f"unknown counting method {method!r}")
    lower = upper = None
    applies = False
    if kind == "P" and n >= level >= 1:
        lower, upper = sandwich_bounds(sp, n)
        applies = _is_entropy_shape(system, n)
        if not applies:
            notes.append("bounds shown for reference; they are proved for the entropy-family shape only")
    with mpmath.workprec(prec + GUARD_BITS):
        rate = mpmath.log(count) / sp.h(n)
    return WordCountResult(level, n, method, count, rate, lower, upper, applies, notes)


def kappa_lower_bound(system: OdomutantSystem, level: int, n: int) -> Fraction:
    """q~_n / prod_{k=l}^{n} kappa_k^{h_n/h_k} with kappa_k the degree of the level k-1 block map."""
    fam, sp = system.family, system.space
    if fam.multiplicity is None:
        raise PreconditionError("the kappa bound needs a multiplicity structure")
    denom = 1
    for k in range(level, n + 1):
        kap = kappa(fam, k - 1)
        if kap is None:
            raise PreconditionError(f"block map at level {k - 1} is not uniformly finite-to-one")
        denom *= kap ** (sp.h(n) // sp.h(k))
    return Fraction(fam.multiplicity.qt(n), denom)


@dataclass
class EntropyRow:
    n: int
    count: int
    estimate: mpmath.mpf
    target: mpmath.mpf
    upper: mpmath.mpf

    def to_json(self) -> dict:
        return {"n": self.n, "count": self.count, "log_count_over_h": mpmath.nstr(self.estimate, 20),
                "log_q_over_h": mpmath.nstr(self.target, 20), "upper": mpmath.nstr(self.upper, 20)}


def entropy_estimate(system: OdomutantSystem, level: int, n_list: Iterable[int], method: str = "brute",
                     letter_budget: int = DEFAULT_LETTER_BUDGET, prec: int = DEFAULT_PREC) -> list[EntropyRow]:
    """log N / h(n) next to log q_n / h_n and the matching upper estimate."""
    sp = system.space
    rows = []
    with mpmath.workprec(prec + GUARD_BITS):
        for n in n_list:
            res = count_words(system, "P", level, n, method, letter_budget, prec)
            hn = sp.h(n)
            target = mpmath.log(sp.q(n)) / hn
            if n >= 1:
                qp = sp.q(n - 1)
                upper = (mpmath.log(sp.h(n - 1)) + mpmath.log(sp.q(n)) + 2 * mpmath.log(qp) + qp * mpmath.log(2)) / hn
            else:
                upper = mpmath.inf
            rows.append(EntropyRow(n, res.count, res.log_count_rate, target, upper))
    return rows


# -- metrics -----------------------------------------------------------------


def _letters(w) -> tuple:
    return w.letters if isinstance(w, Word) else tuple(w)


def lcs_length(a: Sequence, b: Sequence, band: int | None = None) -> int:
    """Longest common subsequence by the row-by-row DP.

    With ``band`` only cells with |i - j| <= band are filled, which gives a
    lower bound on the true length.
    """
    m = len(b)
    prev = [0] * (m + 1)
    for i, x in enumerate(a, 1):
        cur = [0] * (m + 1)
        lo, hi = (1, m) if band is None else (max(1, i - band), min(m, i + band))
        for j in range(lo, hi + 1):
            if x == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = cur[j - 1] if cur[j - 1] > prev[j] else prev[j]
        if band is not None:
            for j in range(hi + 1, m + 1):
                cur[j] = cur[hi]
        prev = cur
    return prev[m]


def f_metric(w1, w2, band: int | None = None) -> Fraction:
    """1 - k/n with k the longest common subsequence length.

    A banded run can only overestimate the distance.
    """
    a, b = _letters(w1), _letters(w2)
    if len(a) != len(b):
        raise ConfigError(f"f-distance needs equal lengths, got {len(a)} and {len(b)}")
    if not a:
        raise ConfigError("f-distance needs non-empty words")
    return 1 - Fraction(lcs_length(a, b, band), len(a))


def d_metric(w1, w2) -> int:
    a, b = _letters(w1), _letters(w2)
    if len(a) != len(b):
        raise ConfigError(f"Hamming distance needs equal lengths, got {len(a)} and {len(b)}")
    return sum(x != y for x, y in zip(a, b))


def d_metric_normalized(w1, w2) -> Fraction:
    n = len(_letters(w1))
    if n == 0:
        raise ConfigError("normalized Hamming distance needs non-empty words")
    return Fraction(d_metric(w1, w2), n)


def f_matrix(words: Sequence) -> list[list[Fraction]]:
    k = len(words)
    out = [[Fraction(0)] * k for _ in range(k)]
    for i in range(k):
        for j in range(i + 1, k):
            out[i][j] = out[j][i] = f_metric(words[i], words[j])
    return out


# -- LB0 ---------------------------------------------------------------------


def realizable_words(system: OdomutantSystem, kind: str, level: int, N: int,
                     letter_budget: int = DEFAULT_LETTER_BUDGET) -> dict[tuple[int, ...], Fraction]:
    """Every N-word with its exact mass.

    Pick m with h(m-1) >= N. The points of the level-m column over a at
    height t form a set of mass 1/h(m+1), and their N-word is the window at
    t of W^(m)_a followed by W^(m-1)_0.
    """
    sp = system.space
    if N < 1:
        raise ConfigError("N must be positive")
    if not system.family.fixes_zero:
        raise PreconditionError("word masses past a column top need a family fixing 0")
    m = max(level, 1)
    while sp.h(m - 1) < N:
        m += 1
    if sp.h(m + 1) * N > letter_budget:
        raise ResourceError(f"enumerating {N}-words needs {sp.h(m + 1) * N} letters (budget {letter_budget})")
    tw = TowerWords(system, kind, level, letter_budget)
    tail = tw.word(m - 1, 0)[:N - 1]
    unit = Fraction(1, sp.h(m + 1))
    masses: Counter = Counter()
    for a in range(sp.q(m)):
        stream = tw.word(m, a) + tail
        for t in range(sp.h(m)):
            masses[stream[t:t + N]] += 1
    return {w: unit * c for w, c in masses.items()}


@dataclass
class LB0Report:
    N: int
    eps: Fraction
    word_count: int
    collections: list[dict]
    max_pairwise: Fraction | None
    min_pairwise: Fraction | None
    pairs_checked: int
    partial: bool

    @property
    def best_coverage(self) -> Fraction:
        return max((c["coverage"] for c in self.collections), default=Fraction(0))

    def to_json(self) -> dict:
        return {
            "N": self.N, "eps": str(self.eps), "word_count": self.word_count,
            "collections": [{k: (str(v) if isinstance(v, Fraction) else v) for k, v in c.items()} for c in self.collections],
            "best_coverage": str(self.best_coverage),
            "max_pairwise_f": None if self.max_pairwise is None else str(self.max_pairwise),
            "min_pairwise_f": None if self.min_pairwise is None else str(self.min_pairwise),
            "pairs_checked": self.pairs_checked, "partial": self.partial,
        }


def lb0_report(system: OdomutantSystem, kind: str, level: int, N: int, eps: Fraction, seeds: int = 3,
               letter_budget: int = DEFAULT_LETTER_BUDGET, pair_budget: int = 1 << 26) -> LB0Report:
    """Greedy good collections under pairwise f <= eps, plus a global f summary.

    Words are visited by decreasing mass; each of the heaviest ``seeds``
    words starts one collection. ``pair_budget`` caps the DP cells spent on
    the global summary, beyond which the report is marked partial.
    """
    eps = Fraction(eps)
    masses = realizable_words(system, kind, level, N, letter_budget)
    order = sorted(masses, key=lambda w: (-masses[w], w))
    cache: dict = {}

    def f(a, b):
        key = (a, b) if a <= b else (b, a)
        if key not in cache:
            cache[key] = f_metric(a, b)
        return cache[key]

    collections = []
    for seed in order[:seeds]:
        members = [seed]
        for w in order:
            if w is seed or w == seed:
                continue
            if all(f(w, u) <= eps for u in members):
                members.append(w)
        inner = max((f(a, b) for i, a in enumerate(members) for b in members[i + 1:]), default=Fraction(0))
        collections.append({"size": len(members), "coverage": sum((masses[w] for w in members), Fraction(0)),
                            "max_pairwise_f": inner})
    worst = best = None
    checked = 0
    partial = False
    for i, a in enumerate(order):
        for b in order[i + 1:]:
            if (checked + 1) * N * N > pair_budget:
                partial = True
                break
            v = f(a, b)
            checked += 1
            worst = v if worst is None or v > worst else worst
            best = v if best is None or v < best else best
        if partial:
            break
    return LB0Report(N, eps, len(masses), collections, worst, best, checked, partial)
