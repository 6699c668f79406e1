"""Orbit-equivalence cocycles c_T, c_S and the phi-integrability series."""
from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

import mpmath

from .arith import DEFAULT_PREC, GUARD_BITS, hp_log
from .dynamics import (INF, OdomutantSystem, apply_S, apply_S_power, apply_T, apply_T_power, n_plus,
                       n_plus_psi, with_extension)
from .errors import ConfigError, DomainError, InternalError, Undetermined, ValidationError
from .families import CyclicFamily, IdentityFamily, TableFamily
from .space import BaseSequence, Cylinder, Point, Tail, cylinder_measure


def points_equal(space: BaseSequence, a: Point, b: Point) -> bool:
    """Digit-wise equality over both prefixes, with matching tails beyond."""
    top = max(len(a.prefix), len(b.prefix))
    for n in range(top):
        if space.digit(a, n) != space.digit(b, n):
            return False
    if a.tail is b.tail:
        return True
    # a shorter prefix with a known tail may still spell the same digits
    if Tail.UNSPECIFIED in (a.tail, b.tail):
        raise Undetermined("cannot compare an unspecified tail with a known one", needed=top + 1)
    return False


def cocycle_T(system: OdomutantSystem, p: Point) -> int:
    """c_T(x) = sum_{i <= N1} h_i (y_i - x_i), N1 = N+(psi(x)), so that Tx = S^{c_T(x)} x."""
    sp = system.space
    N1 = n_plus_psi(system, p)
    if N1 == INF:
        if system.extends_to_homeomorphism:
            return 1
        raise DomainError("c_T is undefined where psi(x) is maximal")
    y = apply_T(system, p)
    return sum(sp.h(i) * (sp.digit(y, i) - sp.digit(p, i)) for i in range(N1 + 1))


def cocycle_S(system: OdomutantSystem, p: Point) -> int:
    """c_S(x) by the closed formula with N2 = N+(x), so that Sx = T^{c_S(x)} x."""
    sp, fam = system.space, system.family
    N2 = n_plus(sp, p)
    if N2 == INF:
        if system.extends_to_homeomorphism:
            return 1
        raise DomainError("c_S is undefined at the maximal point")
    x = sp.digits(p, N2 + 2)
    s = fam.sigma
    total = sp.h(N2) * (s(N2, x[N2 + 1], 1 + x[N2]) - s(N2, x[N2 + 1], x[N2]))
    if N2 >= 1:
        total += sp.h(N2 - 1) * (s(N2 - 1, 1 + x[N2], 0) - s(N2 - 1, x[N2], x[N2 - 1]))
    for i in range(N2 - 1):
        total += sp.h(i) * (s(i, 0, 0) - s(i, x[i + 1], x[i]))
    return total


@dataclass
class SampleCheck:
    point: Point
    c_T: int
    c_S: int
    n1: int
    ok_T: bool
    ok_S: bool
    bound_ok: bool


def check_point(system: OdomutantSystem, p: Point) -> SampleCheck:
    sp = system.space
    cT = cocycle_T(system, p)
    cS = cocycle_S(system, p)
    n1 = n_plus_psi(system, p)
    ok_T = points_equal(sp, apply_T(system, p), apply_S_power(sp, p, cT))
    ok_S = points_equal(sp, apply_S(sp, p), apply_T_power(system, p, cS))
    bound_ok = n1 == INF or abs(cT) <= sp.h(n1 + 1)
    return SampleCheck(p, cT, cS, n1, ok_T, ok_S, bound_ok)


@dataclass
class OrbitEquivalenceReport:
    samples: int
    checked: int
    excluded: int
    failures: list[dict]
    bound_violations: list[dict]

    @property
    def ok(self) -> bool:
        return not self.failures and not self.bound_violations

    def to_json(self) -> dict:
        return {"samples": self.samples, "checked": self.checked, "excluded": self.excluded,
                "failures": self.failures, "bound_violations": self.bound_violations, "ok": self.ok}


def _draw(system: OdomutantSystem, rng: random.Random, start: int) -> Point:
    sp = system.space
    length = start if sp.max_level is None else min(start, sp.max_level)
    return sp.random_point(rng, length)


def verify_orbit_equivalence(system: OdomutantSystem, samples: int, seed, prefix_start: int = 4,
                             prefix_budget: int = 64) -> OrbitEquivalenceReport:
    """Check Tp = S^{c_T(p)} p and Sp = T^{c_S(p)} p on seeded uniform samples."""
    rng = random.Random(f"{seed}:oe")
    failures, bounds = [], []
    excluded = 0
    for _ in range(samples):
        p = _draw(system, rng, prefix_start)
        try:
            chk, p = with_extension(system.space, lambda z: check_point(system, z), p, rng, prefix_budget)
        except Undetermined:
            excluded += 1
            continue
        if not (chk.ok_T and chk.ok_S):
            failures.append({"point": p.to_json(), "c_T": chk.c_T, "c_S": chk.c_S,
                             "T_identity": chk.ok_T, "S_identity": chk.ok_S})
        if not chk.bound_ok:
            bounds.append({"point": p.to_json(), "c_T": chk.c_T, "n1": chk.n1})
    return OrbitEquivalenceReport(samples, samples - excluded, excluded, failures, bounds)


# -- phi maps and series ------------------------------------------------------


@dataclass(frozen=True)
class PhiMap:
    """A gauge phi evaluated through log t, so astronomically large t are fine.

    kinds: "power" (t^p), "log_quotient" (log t / log^{(m)} t with
    log^{(0)} the identity), "linear" (t), "log" (log t).
    """

    kind: str
    p: Fraction = Fraction(1)
    m: int = 0

    def __post_init__(self):
        if self.kind not in ("power", "log_quotient", "linear", "log"):
            raise ConfigError(f"unknown phi kind {self.kind!r}")
        if self.kind == "power" and self.p <= 0:
            raise ConfigError("power gauge needs a positive exponent")

    @classmethod
    def from_config(cls, spec) -> "PhiMap":
        if isinstance(spec, str):
            return cls(spec)
        kind = spec.get("kind")
        return cls(kind, Fraction(str(spec.get("p", 1))), int(spec.get("m", 0)))

    def log_value(self, log_t: mpmath.mpf, prec: int = DEFAULT_PREC) -> mpmath.mpf:
        """log phi(t) given log t."""
        with mpmath.workprec(prec + GUARD_BITS):
            if self.kind == "linear":
                return log_t
            if self.kind == "power":
                return mpmath.mpf(self.p.numerator) / self.p.denominator * log_t
            if log_t <= 0:
                raise DomainError("log gauge needs t > 1")
            if self.kind == "log":
                return mpmath.log(log_t)
            # log t / log^{(m)} t
            if self.m == 0:
                return mpmath.log(log_t) - log_t
            inner = log_t
            for _ in range(self.m - 1):
                if inner <= 0:
                    raise DomainError(f"log^({self.m}) t is not positive here")
                inner = mpmath.log(inner)
            if inner <= 0:
                raise DomainError(f"log^({self.m}) t is not positive here")
            return mpmath.log(log_t) - mpmath.log(inner)

    def __call__(self, t, prec: int = DEFAULT_PREC) -> mpmath.mpf:
        with mpmath.workprec(prec + GUARD_BITS):
            return mpmath.exp(self.log_value(hp_log(t, prec), prec))

    def describe(self) -> dict:
        return {"kind": self.kind, "p": str(self.p), "m": self.m}


@dataclass
class SeriesTable:
    rows: list[tuple[int, mpmath.mpf, mpmath.mpf]]
    advisory: str
    precision: int
    notes: list[str] = field(default_factory=list)

    def monotone(self) -> bool:
        return all(b[2] >= a[2] for a, b in zip(self.rows, self.rows[1:]))

    def to_json(self) -> dict:
        return {"precision_bits": self.precision, "advisory": self.advisory, "notes": self.notes,
                "rows": [{"n": n, "term": mpmath.nstr(t, 20), "partial_sum": mpmath.nstr(s, 20)} for n, t, s in self.rows]}

    def csv_rows(self):
        return [(n, mpmath.nstr(t, 20), mpmath.nstr(s, 20)) for n, t, s in self.rows]


def _advice(terms: list[mpmath.mpf], tol: float = 1e-6) -> str:
    """Advisory only: finitely many terms never settle convergence."""
    if len(terms) < 3:
        return "inconclusive (advisory)"
    top = max(terms)
    tail = terms[-3:]
    if top > 0 and min(tail) >= top / 2:
        return "terms do not shrink; divergence suggested (advisory)"
    if max(tail) < tol:
        return "terms below tolerance; convergence suggested (advisory)"
    return "inconclusive (advisory)"


def phi_series_C1(space: BaseSequence, phi: PhiMap, n_max: int, prec: int = DEFAULT_PREC) -> SeriesTable:
    """Partial sums of phi(h(n+1)) / h(n), evaluated in log space."""
    rows = []
    total = mpmath.mpf(0)
    terms = []
    with mpmath.workprec(prec + GUARD_BITS):
        for n in range(n_max + 1):
            if not space.has_level(n):
                break
            log_term = phi.log_value(space.log_h(n + 1, prec), prec) - space.log_h(n, prec)
            term = mpmath.exp(log_term)
            total += term
            terms.append(term)
            rows.append((n, term, total))
    return SeriesTable(rows, _advice(terms), prec)


def displacement_counts(family, n: int, work_limit: int = 1 << 24) -> tuple[Counter, Counter]:
    """Histograms of the two displacements entering the finer integrability series.

    first: over (x_n, x_{n+1}) with sigma(x_n) != q_n - 1 of |sigma^-1(sigma(x_n)+1) - x_n|;
    second: over x_n <= q_n - 2 and all x_{n+1} of |sigma(1+x_n) - sigma(x_n)|;
    with sigma = sigma^(n)_{x_{n+1}}.
    """
    sp = family.space
    q, qn = sp.q(n), sp.q(n + 1)
    first, second = Counter(), Counter()
    if isinstance(family, IdentityFamily):
        first[1] = (q - 1) * qn
        second[1] = (q - 1) * qn
        return first, second
    if isinstance(family, CyclicFamily):
        zero_shifts = (qn + q - 1) // q  # i in 0..qn-1 with i = 0 mod q
        others = qn - zero_shifts
        first[1] = zero_shifts * (q - 1) + others * (q - 2)
        second[1] = zero_shifts * (q - 1) + others * (q - 2)
        if others:
            first[q - 1] += others
            second[q - 1] += others
        return +first, +second
    if q * qn > work_limit:
        raise ValidationError(f"level {n} needs {q * qn} table entries")
    return _displacements_by_scan(family, n)


def _displacements_by_scan(family, n: int) -> tuple[Counter, Counter]:
    sp = family.space
    q, qn = sp.q(n), sp.q(n + 1)
    first, second = Counter(), Counter()
    seen: dict = {}
    for i in range(qn):
        perm = family.table(n, i)
        key = perm
        if key in seen:
            f, s = seen[key]
        else:
            f, s = Counter(), Counter()
            inv = [0] * q
            for x, v in enumerate(perm):
                inv[v] = x
            for x in range(q):
                if perm[x] != q - 1:
                    f[abs(inv[perm[x] + 1] - x)] += 1
                if x <= q - 2:
                    s[abs(perm[x + 1] - perm[x])] += 1
            seen[key] = (f, s)
        first.update(f)
        second.update(s)
    return first, second


def phi_series_C2(system: OdomutantSystem, phi: PhiMap, n_max: int, prec: int = DEFAULT_PREC):
    """Both partial-sum sequences of the finer integrability condition."""
    sp, fam = system.space, system.family
    out = []
    tot1 = tot2 = mpmath.mpf(0)
    terms1, terms2 = [], []
    inner = {}
    with mpmath.workprec(prec + GUARD_BITS):
        for n in range(n_max + 1):
            if not sp.has_level(n + 1):
                break
            first, second = displacement_counts(fam, n)
            log_h, log_h2 = sp.log_h(n, prec), sp.log_h(n + 2, prec)

            def weighted(hist):
                acc = mpmath.mpf(0)
                for d, count in hist.items():
                    acc += count * mpmath.exp(phi.log_value(log_h + mpmath.log(1 + d), prec) - log_h2)
                return acc

            t1, t2 = weighted(first), weighted(second)
            tot1 += t1
            tot2 += t2
            terms1.append(t1)
            terms2.append(t2)
            out.append((n, t1, tot1, t2, tot2))
            inner[n] = {"first": dict(sorted(first.items())), "second": dict(sorted(second.items()))}
    first_table = SeriesTable([(n, a, b) for n, a, b, _, _ in out], _advice(terms1), prec)
    second_table = SeriesTable([(n, c, d) for n, _, _, c, d in out], _advice(terms2), prec)
    return first_table, second_table, inner


# -- Monte Carlo statistics ---------------------------------------------------


def level_law(space: BaseSequence, n: int) -> Fraction:
    """mu{N+(psi(x)) = n} = (q_n - 1) / h_{n+1}, via the cylinder [q0-1, ..., q_{n-1}-1, {0..q_n-2}]."""
    cyl = Cylinder.of(*[space.q(i) - 1 for i in range(n)], range(space.q(n) - 1))
    return cylinder_measure(space, cyl)


@dataclass
class CocycleReport:
    sample_count: int
    excluded: int
    histogram: dict[int, int]
    level_counts: dict[int, int]
    level_law: dict[int, dict]
    phi_mean: str | None
    max_abs: int
    entropy_estimate: float
    failures: int

    def to_json(self) -> dict:
        return {
            "sample_count": self.sample_count,
            "excluded_undetermined": self.excluded,
            "histogram": {str(k): v for k, v in sorted(self.histogram.items())},
            "level_counts": {str(k): v for k, v in sorted(self.level_counts.items())},
            "level_law": {str(k): v for k, v in sorted(self.level_law.items())},
            "phi_mean": self.phi_mean,
            "max_abs_cocycle": self.max_abs,
            "empirical_entropy_estimate": self.entropy_estimate,
            "identity_failures": self.failures,
        }


def cocycle_stats(system: OdomutantSystem, sample_count: int, prefix_budget: int, seed, phi: PhiMap | None = None,
                  prefix_start: int = 4, prec: int = DEFAULT_PREC) -> CocycleReport:
    """Histogram of c_T on seeded samples with the per-level law of N+(psi(x)) alongside."""
    sp = system.space
    rng = random.Random(f"{seed}:stats")
    hist: Counter = Counter()
    levels: Counter = Counter()
    excluded = failures = 0
    phi_total = mpmath.mpf(0)
    for _ in range(sample_count):
        p = _draw(system, rng, prefix_start)
        try:
            chk, p = with_extension(sp, lambda z: check_point(system, z), p, rng, prefix_budget)
        except Undetermined:
            excluded += 1
            continue
        if not (chk.ok_T and chk.ok_S and chk.bound_ok):
            failures += 1
        hist[chk.c_T] += 1
        levels[chk.n1] += 1
        if phi is not None:
            with mpmath.workprec(prec + GUARD_BITS):
                phi_total += phi(abs(chk.c_T), prec) if chk.c_T else 0
    if failures:
        raise InternalError(f"{failures} samples violated an orbit-equivalence identity")
    used = sample_count - excluded
    law = {}
    for n in sorted(levels) if levels else []:
        p_exact = level_law(sp, n)
        expected = used * p_exact
        sd = math.sqrt(float(used * p_exact * (1 - p_exact)))
        law[n] = {"count": levels[n], "exact_probability": str(p_exact), "expected": float(expected),
                  "within_3_sigma": abs(levels[n] - float(expected)) <= 3 * sd + 1}
    ent = -sum((c / used) * math.log(c / used) for c in hist.values()) if used else 0.0
    return CocycleReport(sample_count, excluded, dict(hist), dict(levels), law,
                         mpmath.nstr(phi_total / used, 20) if phi is not None and used else None,
                         max((abs(v) for v in hist), default=0), ent, failures)
