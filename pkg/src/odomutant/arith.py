"""Factored integers, high-precision logarithms and cautious comparisons.

Comparisons between high-precision reals return a three-valued verdict:
an inequality is reported as holding (or failing) only when the gap is
larger than the rounding margin at the working precision.
"""
from __future__ import annotations

import enum
import math
from fractions import Fraction
from typing import Iterable, Mapping, Union

import mpmath

from .errors import ResourceError, ValidationError

DEFAULT_PREC = 128
GUARD_BITS = 16


class Verdict(str, enum.Enum):
    HOLDS = "holds"
    FAILS = "fails"
    UNDECIDED = "undecided"


def factorize(n: int, limit: int = 10**7) -> dict[int, int]:
    """Trial division. Good enough for the moderate integers of explicit spaces."""
    if n < 1:
        raise ValidationError(f"cannot factor {n}")
    out: dict[int, int] = {}
    p = 2
    while p * p <= n:
        if p > limit:
            raise ResourceError(f"trial division limit exceeded while factoring {n}")
        while n % p == 0:
            out[p] = out.get(p, 0) + 1
            n //= p
        p += 1 if p == 2 else 2
    if n > 1:
        out[n] = out.get(n, 0) + 1
    return out


def is_prime(n: int) -> bool:
    return n >= 2 and factorize(n) == {n: 1}


class FactoredInt:
    """A positive integer kept as a prime-exponent vector.

    Exponents may themselves be huge, so the value is only expanded on
    request and under a bit budget.
    """

    __slots__ = ("_exps", "_log_cache")

    def __init__(self, exponents: Mapping[int, int] | Iterable[tuple[int, int]], *, _allow_one: bool = False):
        items = dict(exponents.items() if isinstance(exponents, Mapping) else exponents)
        clean = {}
        for p, e in items.items():
            p, e = int(p), int(e)
            if e < 0:
                raise ValidationError(f"negative exponent {e} for prime {p}")
            if p < 2:
                raise ValidationError(f"{p} is not a prime")
            if e:
                clean[p] = e
        if not clean and not _allow_one:
            raise ValidationError("factored integer needs at least one positive exponent")
        self._exps = tuple(sorted(clean.items()))
        self._log_cache: dict[int, mpmath.mpf] = {}

    @classmethod
    def unit(cls) -> "FactoredInt":
        return cls({}, _allow_one=True)

    @classmethod
    def from_int(cls, n: int) -> "FactoredInt":
        if n == 1:
            return cls.unit()
        return cls(factorize(n))

    @classmethod
    def prime_power(cls, p: int, e: int) -> "FactoredInt":
        return cls({p: e}, _allow_one=(e == 0))

    @property
    def exponents(self) -> dict[int, int]:
        return dict(self._exps)

    def valuation(self, p: int) -> int:
        return dict(self._exps).get(p, 0)

    def is_one(self) -> bool:
        return not self._exps

    def __mul__(self, other: "FactoredInt | int") -> "FactoredInt":
        if isinstance(other, int):
            other = FactoredInt.from_int(other)
        acc = dict(self._exps)
        for p, e in other._exps:
            acc[p] = acc.get(p, 0) + e
        return FactoredInt(acc, _allow_one=True)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "FactoredInt":
        if k < 0:
            raise ValidationError("negative powers are not integers")
        return FactoredInt({p: e * k for p, e in self._exps}, _allow_one=True)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, FactoredInt):
            return self._exps == other._exps
        if isinstance(other, int):
            return other >= 1 and self._exps == FactoredInt.from_int(other)._exps
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self._exps)

    def log2_upper(self) -> int:
        """An integer upper bound for log2 of the value."""
        return sum(e * p.bit_length() for p, e in self._exps)

    def expand(self, max_bits: int = 1 << 22) -> int:
        if self.log2_upper() > max_bits:
            raise ResourceError(f"expanding a factored integer needs about {self.log2_upper()} bits (> {max_bits})")
        out = 1
        for p, e in self._exps:
            out *= p**e
        return out

    def log(self, prec: int = DEFAULT_PREC) -> mpmath.mpf:
        if prec not in self._log_cache:
            with mpmath.workprec(prec + GUARD_BITS):
                val = mpmath.fsum(mpmath.mpf(e) * mpmath.log(p) for p, e in self._exps) if self._exps else mpmath.mpf(0)
            self._log_cache[prec] = val
        return self._log_cache[prec]

    def to_json(self) -> list[list]:
        return [[p, str(e)] for p, e in self._exps]

    @classmethod
    def from_json(cls, data: list) -> "FactoredInt":
        return cls({int(p): int(e) for p, e in data}, _allow_one=True)

    def __repr__(self) -> str:
        if not self._exps:
            return "FactoredInt(1)"
        body = " * ".join(f"{p}^{e}" if e < 10**6 else f"{p}^<{len(str(e))} digits>" for p, e in self._exps)
        return f"FactoredInt({body})"


Number = Union[int, Fraction, FactoredInt, mpmath.mpf, float]


def hp(x: Number, prec: int = DEFAULT_PREC) -> mpmath.mpf:
    with mpmath.workprec(prec + GUARD_BITS):
        if isinstance(x, Fraction):
            return mpmath.mpf(x.numerator) / x.denominator
        if isinstance(x, FactoredInt):
            return mpmath.exp(x.log(prec))
        return mpmath.mpf(x)


def hp_log(x: Number, prec: int = DEFAULT_PREC) -> mpmath.mpf:
    """Natural logarithm of a positive number at ``prec`` bits."""
    if isinstance(x, FactoredInt):
        return x.log(prec)
    with mpmath.workprec(prec + GUARD_BITS):
        if isinstance(x, Fraction):
            if x <= 0:
                raise ValidationError(f"log of non-positive {x}")
            return mpmath.log(x.numerator) - mpmath.log(x.denominator)
        if x <= 0:
            raise ValidationError(f"log of non-positive {x}")
        return mpmath.log(x)


def log_factorial(n: int, prec: int = DEFAULT_PREC) -> mpmath.mpf:
    if n < 0:
        raise ValidationError("factorial of a negative integer")
    if n <= 1000:
        with mpmath.workprec(prec + GUARD_BITS):
            return mpmath.log(math.factorial(n))
    with mpmath.workprec(prec + GUARD_BITS):
        return mpmath.loggamma(n + 1)


def margin(a: mpmath.mpf, b: mpmath.mpf, prec: int) -> mpmath.mpf:
    scale = max(abs(a), abs(b), mpmath.mpf(1) if (a == 0 and b == 0) else mpmath.mpf(0))
    return mpmath.ldexp(scale, -(prec - GUARD_BITS)) if scale else mpmath.mpf(0)


def decide_le(a: mpmath.mpf, b: mpmath.mpf, prec: int = DEFAULT_PREC) -> Verdict:
    """Decide ``a <= b`` for values computed at ``prec`` bits."""
    with mpmath.workprec(prec + 2 * GUARD_BITS):
        m = margin(a, b, prec)
        gap = b - a
        if gap > m:
            return Verdict.HOLDS
        if gap < -m:
            return Verdict.FAILS
    return Verdict.UNDECIDED


def combine(verdicts: Iterable[Verdict]) -> Verdict:
    verdicts = list(verdicts)
    if any(v is Verdict.FAILS for v in verdicts):
        return Verdict.FAILS
    if any(v is Verdict.UNDECIDED for v in verdicts):
        return Verdict.UNDECIDED
    return Verdict.HOLDS


def floor_hp(x: mpmath.mpf, prec: int = DEFAULT_PREC) -> int | None:
    """Floor of ``x`` when it is safely away from an integer, else None."""
    with mpmath.workprec(prec + 2 * GUARD_BITS):
        f = mpmath.floor(x)
        m = margin(x, x, prec) + mpmath.ldexp(1, -(prec - GUARD_BITS))
        if x - f < m or f + 1 - x < m:
            return None
        return int(f)


def mp_str(x: mpmath.mpf, digits: int = 30) -> str:
    return mpmath.nstr(x, digits)
