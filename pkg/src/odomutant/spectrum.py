"""Eigenfunctions of the odometer as exact rotation numbers, their pullbacks, and a counting lemma."""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath

from .arith import DEFAULT_PREC, GUARD_BITS, Verdict, decide_le, floor_hp, mp_str
from .dynamics import OdomutantSystem, apply_psi, apply_S, apply_T, with_extension
from .errors import ConfigError, DomainError, PreconditionError, Undetermined
from .families import CyclicFamily, IdentityFamily
from .space import BaseSequence, Point


@dataclass(frozen=True)
class Eigenvalue:
    """exp(2 pi i k / h_n), kept as the reduced rotation number k / h_n."""

    k: int
    n: int
    rotation: Fraction

    @classmethod
    def of(cls, space: BaseSequence, k: int, n: int) -> "Eigenvalue":
        h = space.h(n)
        if not 0 <= k < h:
            raise ConfigError(f"need 0 <= k < h_{n} = {h}")
        return cls(k, n, Fraction(k, h))

    def power(self, j: int) -> Fraction:
        """Rotation number of lambda^j, reduced mod 1."""
        return (self.rotation * j) % 1

    def value_at(self, space: BaseSequence, p: Point) -> Fraction:
        """f_lambda(p) = lambda^j with j the height of p in the level-n tower."""
        return self.power(eigenfunction_index(space, p, self.n))

    def torsion(self, space: BaseSequence) -> bool:
        return self.power(space.h(self.n)) == 0


def eigenfunction_index(space: BaseSequence, p: Point, n: int) -> int:
    """j with p in S^j([0,...,0]_n), that is sum_{i<n} h_i x_i."""
    return space.position(space.digits(p, n), n)


@dataclass
class RelationReport:
    n: int
    samples: int
    checked: int
    excluded: int
    failures: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_json(self) -> dict:
        return {"n": self.n, "samples": self.samples, "checked": self.checked, "excluded_undetermined": self.excluded,
                "failures": self.failures, "ok": self.ok}


def _sample_length(space: BaseSequence, n: int) -> int:
    want = n + 2
    return want if space.max_level is None else min(want, space.max_level)


def check_eigen_relation(space: BaseSequence, n: int, samples: int, seed, budget: int = 64) -> RelationReport:
    """index(S p) = index(p) + 1 mod h_n on seeded samples."""
    rng = random.Random(f"{seed}:eigen")
    h = space.h(n)
    rep = RelationReport(n, samples, 0, 0)
    for _ in range(samples):
        p = space.random_point(rng, _sample_length(space, n))
        try:
            (a, b), p = with_extension(space, lambda z: (eigenfunction_index(space, z, n),
                                                         eigenfunction_index(space, apply_S(space, z), n)), p, rng, budget)
        except Undetermined:
            rep.excluded += 1
            continue
        rep.checked += 1
        if b != (a + 1) % h:
            rep.failures.append({"point": p.to_json(), "index": a, "index_after": b})
    return rep


def check_pullback(system: OdomutantSystem, n: int, samples: int, seed, budget: int = 64) -> RelationReport:
    """index(psi(T p)) = index(psi(p)) + 1 mod h_n, so each f_lambda o psi is an eigenfunction of T.

    This is only the inclusion of the odometer's spectrum in that of T.
    """
    sp = system.space
    rng = random.Random(f"{seed}:pullback")
    h = sp.h(n)
    rep = RelationReport(n, samples, 0, 0)

    def both(z):
        return (eigenfunction_index(sp, apply_psi(system, z), n),
                eigenfunction_index(sp, apply_psi(system, apply_T(system, z)), n))

    for _ in range(samples):
        p = sp.random_point(rng, _sample_length(sp, n) + 1)
        try:
            (a, b), p = with_extension(sp, both, p, rng, budget)
        except (Undetermined, DomainError):
            rep.excluded += 1
            continue
        rep.checked += 1
        if b != (a + 1) % h:
            rep.failures.append({"point": p.to_json(), "index": a, "index_after": b})
    return rep


# -- the counting lemma ------------------------------------------------------


def theta(eps, prec: int = DEFAULT_PREC) -> mpmath.mpf:
    """|1 - exp(2 pi i t)| < eps exactly when the distance from t to Z is below arcsin(eps/2)/pi."""
    eps = Fraction(eps)
    with mpmath.workprec(prec + GUARD_BITS):
        return mpmath.asin(mpmath.mpf(eps.numerator) / (2 * eps.denominator)) / mpmath.pi


@dataclass
class ComplexCheck:
    tau: Fraction
    eps: Fraction
    interval: tuple[int, int]
    count: int | None
    bound: mpmath.mpf
    verdict: Verdict
    note: str = ""

    @property
    def ok(self) -> bool:
        return self.verdict is Verdict.HOLDS

    def to_json(self) -> dict:
        return {"tau": str(self.tau), "eps": str(self.eps), "interval": list(self.interval), "count": self.count,
                "bound": mp_str(self.bound), "verdict": self.verdict.value, "note": self.note}


def _residue_cut(b: int, eps: Fraction, th: mpmath.mpf, prec: int) -> int | None:
    """Largest r >= 0 with r/b < theta, or None when precision cannot tell.

    For rational eps, 2 sin(pi r/b) = eps can only happen at r/b = 1/6 with
    eps = 1 (the rational values of sine at rational multiples of pi are
    0, 1/2 and 1), so that tie is settled exactly.
    """
    if eps == 1 and b % 6 == 0:
        return b // 6 - 1
    with mpmath.workprec(prec + GUARD_BITS):
        return floor_hp(th * b, prec)


def count_near_one(tau: Fraction, eps: Fraction, lo: int, hi: int, prec: int = DEFAULT_PREC) -> int | None:
    """#{j in [lo, hi] : |1 - exp(2 pi i tau j)| < eps} with tau = a/b, by residues of a j mod b."""
    tau, eps = Fraction(tau), Fraction(eps)
    a, b = tau.numerator, tau.denominator
    t = _residue_cut(b, eps, theta(eps, prec), prec)
    if t is None:
        return None

    def near(j: int) -> bool:
        r = (a * j) % b
        return min(r, b - r) <= t

    length = hi - lo + 1
    if length <= 0:
        return 0
    full, rest = divmod(length, b)
    # over b consecutive j the residues run through every class once
    per_period = min(2 * t + 1, b)
    return full * per_period + sum(near(j) for j in range(lo + full * b, hi + 1))


def lemma_complex_check(tau, eps, interval: tuple[int, int], prec: int = DEFAULT_PREC) -> ComplexCheck:
    """Count j in J with |1 - nu^j| < eps for nu = exp(2 pi i tau) next to 3 theta/(1 - 2 theta) |J| + 6 theta/|tau|."""
    tau, eps = Fraction(tau), Fraction(eps)
    lo, hi = interval
    if not 0 < eps < 2:
        raise ConfigError("need 0 < eps < 2")
    if tau % 1 == 0:
        raise PreconditionError("nu = 1 is excluded")
    th = theta(eps, prec)
    if decide_le(th, mpmath.mpf(1) / 4, prec) is not Verdict.HOLDS or th == mpmath.mpf(1) / 4:
        raise PreconditionError("eps too large: theta(eps) must stay below 1/4")
    with mpmath.workprec(prec + GUARD_BITS):
        at = abs(mpmath.mpf(tau.numerator) / tau.denominator)
        # nu itself must satisfy |1 - nu| < eps, i.e. |tau| < theta
        if decide_le(th, at, prec) is not Verdict.FAILS:
            raise PreconditionError("need |tau| < theta(eps)")
        size = max(hi - lo + 1, 0)
        bound = 3 * th / (1 - 2 * th) * size + 6 * th / at
    count = count_near_one(tau, eps, lo, hi, prec)
    if count is None:
        return ComplexCheck(tau, eps, (lo, hi), None, bound, Verdict.UNDECIDED, "residue cut undecidable")
    return ComplexCheck(tau, eps, (lo, hi), count, bound, decide_le(mpmath.mpf(count), bound, prec))


@dataclass
class SweepReport:
    cases: int
    violations: list[dict]
    undecided: list[dict]

    def to_json(self) -> dict:
        return {"cases": self.cases, "violations": self.violations, "undecided": self.undecided}


def lemma_complex_sweep(cases: int, seed, max_denominator: int = 400, max_length: int = 3000,
                        prec: int = DEFAULT_PREC) -> SweepReport:
    """Random (tau, eps, J) with theta(eps) < 1/4 and 0 < |tau| < theta(eps)."""
    rng = random.Random(f"{seed}:complex")
    violations, undecided = [], []
    done = 0
    while done < cases:
        eps = Fraction(rng.randint(1, 140), 100)
        th = float(theta(eps, 53))
        b = rng.randint(2, max_denominator)
        top = int(th * b)
        if top < 1:
            continue
        a = rng.randint(1, top) * rng.choice((-1, 1))
        tau = Fraction(a, b)
        lo = rng.randint(-max_length, max_length)
        hi = lo + rng.randint(0, max_length)
        try:
            res = lemma_complex_check(tau, eps, (lo, hi), prec)
        except PreconditionError:
            continue
        done += 1
        if res.verdict is Verdict.FAILS:
            violations.append(res.to_json())
        elif res.verdict is Verdict.UNDECIDED:
            undecided.append(res.to_json())
    return SweepReport(done, violations, undecided)


# -- fixed points ------------------------------------------------------------


@dataclass
class FixedPointSeries:
    rows: list[dict]
    advisory: str

    def to_json(self) -> dict:
        return {"rows": self.rows, "advisory": self.advisory}


def common_fixed_points(family, n: int) -> int:
    sp = family.space
    if isinstance(family, IdentityFamily):
        return sp.q(n)
    if isinstance(family, CyclicFamily):
        return 0  # the shift by 1 moves every digit
    fixed = set(range(sp.q(n)))
    for t in family.tables(n):
        fixed = {x for x in fixed if t[x] == x}
        if not fixed:
            break
    return len(fixed)


def fixed_point_series(family, n_max: int) -> FixedPointSeries:
    """Partial sums of |F_n| / q_n, F_n the digits fixed by every sigma^(n)_i."""
    sp = family.space
    total = Fraction(0)
    rows = []
    for n in range(n_max + 1):
        if not family.has_level(n):
            break
        d = Fraction(common_fixed_points(family, n), sp.q(n))
        total += d
        rows.append({"n": n, "density": str(d), "partial_sum": str(total)})
    dens = [Fraction(r["density"]) for r in rows]
    if len(dens) >= 3 and min(dens[-3:]) > 0 and min(dens[-3:]) >= max(dens) / 2:
        advice = "densities do not shrink; divergence suggested (advisory)"
    elif dens and all(d == 0 for d in dens):
        advice = "all densities vanish; the series converges (to 0) on the tested levels"
    else:
        advice = "inconclusive (advisory)"
    return FixedPointSeries(rows, advice)
