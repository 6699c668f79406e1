"""Exact evaluation of the odometer S, the maps psi_n and psi, and the odomutant T.

Points are finite prefixes with a tail policy. Every map either returns an
exact result or raises ``Undetermined`` carrying the prefix length it would
need, so Monte Carlo drivers can extend the point and retry.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Callable, TypeVar

from .errors import DomainError, PreconditionError, Undetermined, ValidationError
from .families import PermutationFamily
from .space import BaseSequence, Cylinder, Point, Tail, make_space

INF = math.inf

# how far past the prefix a tail pattern is followed before giving up
SCAN_LIMIT = 256

R = TypeVar("R")


def x_minus() -> Point:
    return Point.minimal()


def x_plus() -> Point:
    return Point.maximal()


@dataclass(frozen=True)
class OdomutantSystem:
    space: BaseSequence
    family: PermutationFamily

    def __post_init__(self):
        if self.family.space is not self.space:
            raise ValidationError("family is defined over a different space")
        self.space.require_concrete()

    @classmethod
    def of(cls, family: PermutationFamily) -> "OdomutantSystem":
        return cls(family.space, family)

    @property
    def extends_to_homeomorphism(self) -> bool:
        return self.family.fixes_zero and self.family.fixes_max

    def psi_digit(self, p: Point, n: int) -> int:
        x_next = self.space.digit(p, n + 1)
        return self.family.sigma(n, x_next, self.space.digit(p, n))


# -- the odometer -------------------------------------------------------------


def _scan_first(space: BaseSequence, p: Point, bad: Callable[[int, int], bool], absorbing: Tail) -> float | int:
    """Least n with digit n of p not matching the extreme pattern; INF on the matching tail."""
    for n in range(len(p.prefix)):
        if not bad(n, p.prefix[n]):
            return n
    n = len(p.prefix)
    if p.tail is absorbing:
        return INF
    if p.tail is Tail.UNSPECIFIED:
        raise Undetermined("all determined digits follow the extreme pattern", needed=n + 1)
    space._check_level(n)
    return n


def n_plus(space: BaseSequence, p: Point) -> float | int:
    """Least level where p departs from x+ = (q0-1, q1-1, ...)."""
    return _scan_first(space, p, lambda n, d: d == space.q(n) - 1, Tail.MAX)


def n_minus(space: BaseSequence, p: Point) -> float | int:
    return _scan_first(space, p, lambda n, d: d == 0, Tail.MIN)


def _replace_prefix(p: Point, low: list[int]) -> Point:
    return Point(tuple(low) + p.prefix[len(low):], p.tail)


def apply_S(space: BaseSequence, p: Point) -> Point:
    """Add one with carry; x+ goes to x-."""
    N = n_plus(space, p)
    if N == INF:
        return x_minus()
    return _replace_prefix(p, [0] * N + [space.digit(p, N) + 1])


def apply_S_inv(space: BaseSequence, p: Point) -> Point:
    N = n_minus(space, p)
    if N == INF:
        return x_plus()
    return _replace_prefix(p, [space.q(i) - 1 for i in range(N)] + [space.digit(p, N) - 1])


def _locate(space: BaseSequence, k: int, digit_at: Callable[[int], int], p: Point, extreme_tail: bool):
    """Find the least n with the first n+1 digits absorbing an addition of k.

    ``digit_at`` reads the digits being added to. Returns (n, value) or
    ("wrap", distance) when the orbit must pass the extreme point first;
    ``extreme_tail`` says the digits past the prefix are known to be extreme.
    """
    value, h, n = 0, 1, 0
    limit = len(p.prefix) + SCAN_LIMIT
    while True:
        if n > limit:
            raise Undetermined("addition did not settle within the scan limit", needed=n + 2)
        d = digit_at(n)
        q = space.q(n)
        value += h * d
        h *= q
        if k > 0 and value + k < h:
            return n, value
        if k < 0 and value + k >= 0:
            return n, value
        if extreme_tail and n >= len(p.prefix):
            # every further level adds as much room as it adds value: the gap is final
            gap = (h - 1 - value) if k > 0 else value
            return "wrap", gap
        n += 1


def apply_S_power(space: BaseSequence, p: Point, k: int) -> Point:
    if k == 0:
        return p
    extreme = p.tail is (Tail.MAX if k > 0 else Tail.MIN)
    n, value = _locate(space, k, lambda i: space.digit(p, i), p, extreme)
    if n == "wrap":
        gap = value
        # gap more steps reach the extreme point, one more wraps around
        if k > 0:
            return apply_S_power(space, x_minus(), k - gap - 1)
        return apply_S_power(space, x_plus(), k + gap + 1)
    return _replace_prefix(p, space.to_digits(value + k, n + 1))


def apply_zeta(space: BaseSequence, n: int, p: Point) -> Point:
    """Addition of one at coordinate n-1, defined off [.., q(n-1)-1]_n.

    Off the excluded cylinder no carry can occur, so this equals S^h(n-1).
    """
    if n < 1:
        raise ValidationError("zeta_n needs n >= 1")
    d = space.digit(p, n - 1)
    if d == space.q(n - 1) - 1:
        raise DomainError(f"point lies in the excluded cylinder (digit {n - 1} is maximal)")
    return _replace_prefix(p, space.digits(p, n - 1) + [d + 1])


# -- psi maps -----------------------------------------------------------------


def apply_psi_n(system: OdomutantSystem, n: int, p: Point) -> Point:
    """(sigma^(0)_{x1}(x0), ..., sigma^(n)_{x_{n+1}}(x_n), x_{n+1}, ...)."""
    sp, fam = system.space, system.family
    xs = sp.digits(p, n + 2)
    low = [fam.sigma(i, xs[i + 1], xs[i]) for i in range(n + 1)]
    return _replace_prefix(p, low)


def apply_psi_n_inv(system: OdomutantSystem, n: int, p: Point) -> Point:
    """Backwards recursion z_n = (sigma^(n)_{x_{n+1}})^-1(x_n), z_i = (sigma^(i)_{z_{i+1}})^-1(x_i)."""
    sp, fam = system.space, system.family
    xs = sp.digits(p, n + 2)
    return _replace_prefix(p, _unpsi(fam, xs[: n + 1], xs[n + 1]))


def _unpsi(fam: PermutationFamily, w: list[int], above: int) -> list[int]:
    z = [0] * len(w)
    nxt = above
    for i in range(len(w) - 1, -1, -1):
        nxt = z[i] = fam.sigma_inv(i, nxt, w[i])
    return z


def apply_psi(system: OdomutantSystem, p: Point) -> Point:
    """psi(x)_n = sigma^(n)_{x_{n+1}}(x_n).

    Output digit n needs input digit n+1, so an Unspecified prefix of length
    m gives m-1 digits. Known tails are carried over when the family fixes
    the corresponding endpoint; otherwise the result tail is Unspecified.
    """
    sp, fam = system.space, system.family
    m = len(p.prefix)
    count = m if p.tail is not Tail.UNSPECIFIED and sp.has_level(m) else max(m - 1, 0)
    out = tuple(fam.sigma(n, sp.digit(p, n + 1), sp.digit(p, n)) for n in range(count))
    tail = Tail.UNSPECIFIED
    if p.tail is Tail.MIN and fam.fixes_zero:
        tail = Tail.MIN
    elif p.tail is Tail.MAX and fam.fixes_max:
        tail = Tail.MAX
    return Point(out, tail)


def _psi_scan(system: OdomutantSystem, p: Point, target: Callable[[int], int], absorbing: Tail, keeps: bool):
    """Least n with psi(p)_n != target(n). INF when the tail pins psi to the target forever."""
    m = len(p.prefix)
    for n in range(m + SCAN_LIMIT):
        if n >= m and p.tail is absorbing and keeps:
            return INF
        if system.psi_digit(p, n) != target(n):
            return n
    raise Undetermined("psi stays extreme along the whole scan window", needed=m + SCAN_LIMIT + 1)


def n_plus_psi(system: OdomutantSystem, p: Point):
    """N+(psi(p))."""
    sp = system.space
    return _psi_scan(system, p, lambda n: sp.q(n) - 1, Tail.MAX, system.family.fixes_max)


def n_minus_psi(system: OdomutantSystem, p: Point):
    return _psi_scan(system, p, lambda n: 0, Tail.MIN, system.family.fixes_zero)


# -- the odomutant ------------------------------------------------------------


def apply_T(system: OdomutantSystem, p: Point) -> Point:
    """One step of the odomutant via the y-recursion.

    With N = N+(psi(x)): y_N = (sigma^(N)_{x_{N+1}})^-1(sigma^(N)_{x_{N+1}}(x_N) + 1)
    and y_i = (sigma^(i)_{y_{i+1}})^-1(0) below N.
    """
    sp, fam = system.space, system.family
    N = n_plus_psi(system, p)
    if N == INF:
        if system.extends_to_homeomorphism:
            return x_minus()
        raise DomainError("psi(x) is the maximal point; T is not defined there")
    above = sp.digit(p, N + 1)
    y = [0] * (N + 1)
    y[N] = fam.sigma_inv(N, above, fam.sigma(N, above, sp.digit(p, N)) + 1)
    for i in range(N - 1, -1, -1):
        y[i] = fam.sigma_inv(i, y[i + 1], 0)
    return _replace_prefix(p, y)


def apply_T_inv(system: OdomutantSystem, p: Point) -> Point:
    sp, fam = system.space, system.family
    N = n_minus_psi(system, p)
    if N == INF:
        if system.extends_to_homeomorphism:
            return x_plus()
        raise DomainError("psi(x) is the minimal point; T^-1 is not defined there")
    above = sp.digit(p, N + 1)
    y = [0] * (N + 1)
    y[N] = fam.sigma_inv(N, above, fam.sigma(N, above, sp.digit(p, N)) - 1)
    for i in range(N - 1, -1, -1):
        y[i] = fam.sigma_inv(i, y[i + 1], sp.q(i) - 1)
    return _replace_prefix(p, y)


def apply_T_power(system: OdomutantSystem, p: Point, k: int) -> Point:
    """T^k x = psi_n^-1 S^k psi_n x for n large enough that no carry leaves level n."""
    if k == 0:
        return p
    sp, fam = system.space, system.family
    keeps = fam.fixes_max if k > 0 else fam.fixes_zero
    extreme = keeps and p.tail is (Tail.MAX if k > 0 else Tail.MIN)
    n, value = _locate(sp, k, lambda i: system.psi_digit(p, i), p, extreme)
    if n == "wrap":
        if not system.extends_to_homeomorphism:
            raise DomainError("the orbit segment passes the point where T is undefined")
        gap = value
        if k > 0:
            return apply_T_power(system, x_minus(), k - gap - 1)
        return apply_T_power(system, x_plus(), k + gap + 1)
    w = sp.to_digits(value + k, n + 1)
    return _replace_prefix(p, _unpsi(fam, w, sp.digit(p, n + 1)))


def iterate(system: OdomutantSystem, p: Point, k: int) -> Point:
    step = apply_T if k >= 0 else apply_T_inv
    for _ in range(abs(k)):
        p = step(system, p)
    return p


def _agree_beyond(space: BaseSequence, x: Point, y: Point, M: int) -> bool:
    top = max(len(x.prefix), len(y.prefix))
    for j in range(M, top):
        try:
            if space.digit(x, j) != space.digit(y, j):
                return False
        except Undetermined:
            raise PreconditionError(f"cannot compare digit {j}: tail is unspecified") from None
    if x.tail is y.tail:
        return True
    raise PreconditionError("the two points have different tail policies")


def transfer_exponent(system: OdomutantSystem, x: Point, y: Point, M: int) -> int:
    """K = sum_{j<M} h_j (sigma^(j)_{y_{j+1}}(y_j) - sigma^(j)_{x_{j+1}}(x_j)), so T^K x = y."""
    sp = system.space
    if not _agree_beyond(sp, x, y, M):
        raise PreconditionError(f"points differ at some level >= {M}")
    if sp.digits(x, M) == sp.digits(y, M):
        raise PreconditionError("x and y must be distinct")
    total = 0
    for j in range(M):
        total += sp.h(j) * (system.psi_digit(y, j) - system.psi_digit(x, j))
    return total


def first_return(system: OdomutantSystem, p: Point, c: Cylinder, cap: int) -> int | None:
    """Least k in 1..cap with T^k p in c; None when the cap is exhausted."""
    sp = system.space
    if not c.contains_point(sp, p):
        raise PreconditionError("starting point is not in the cylinder")
    q = p
    for k in range(1, cap + 1):
        q = apply_T(system, q)
        if c.contains_point(sp, q):
            return k
    return None


# -- sampling -----------------------------------------------------------------


def with_extension(space: BaseSequence, fn: Callable[[Point], R], p: Point, rng: random.Random,
                   budget: int) -> tuple[R, Point]:
    """Evaluate ``fn``; on Undetermined append fresh uniform digits and retry."""
    while True:
        try:
            return fn(p), p
        except Undetermined as exc:
            want = max(exc.needed or 0, len(p.prefix) + 1)
            if p.tail is not Tail.UNSPECIFIED or want > budget or (space.max_level is not None and want > space.max_level):
                raise
            p = space.extend(p, want, rng)


def sample_points(space: BaseSequence, seed, count: int, length: int):
    rng = random.Random(f"{seed}:points")
    for _ in range(count):
        yield space.random_point(rng, min(length, space.max_level or length)), rng
