"""The product space prod_n {0, ..., q(n)-1}, its points, cylinders and partitions."""
from __future__ import annotations

import enum
import random
import threading
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

from .arith import DEFAULT_PREC, FactoredInt, hp_log
from .errors import ConfigError, PreconditionError, Undetermined, ValidationError


class Tail(str, enum.Enum):
    MIN = "min"
    MAX = "max"
    UNSPECIFIED = "unspecified"


@dataclass(frozen=True, slots=True)
class Point:
    """A finite digit prefix together with a policy for the digits after it."""

    prefix: tuple[int, ...]
    tail: Tail = Tail.UNSPECIFIED

    def __post_init__(self):
        if not isinstance(self.prefix, tuple):
            object.__setattr__(self, "prefix", tuple(self.prefix))

    @classmethod
    def minimal(cls) -> "Point":
        return cls((), Tail.MIN)

    @classmethod
    def maximal(cls) -> "Point":
        return cls((), Tail.MAX)

    def __len__(self) -> int:
        return len(self.prefix)

    def to_json(self) -> dict:
        return {"prefix": list(self.prefix), "tail": self.tail.value}

    @classmethod
    def from_json(cls, data: Mapping) -> "Point":
        return cls(tuple(int(d) for d in data["prefix"]), Tail(data.get("tail", "unspecified")))


def _rule_feldman_toy(qt: Sequence[int]) -> Callable[[int], int]:
    qt = [int(v) for v in qt]

    def q(n: int) -> int:
        a, b = qt[n % len(qt)], qt[(n + 1) % len(qt)]
        return a ** (2 * b + 3)

    return q


def _rule_feldman_factored(offset: int) -> Callable[[int], FactoredInt]:
    # q~(n) = 2^(n+offset), q(n) = q~(n)^(2 q~(n+1) + 3)
    def q(n: int) -> FactoredInt:
        return FactoredInt.prime_power(2, (n + offset) * (2 ** (n + offset + 2) + 3))

    return q


class BaseSequence:
    """The defining sequence (q(n)) with exact heights h(n) = q(0)...q(n-1).

    Three storage kinds exist: an explicit (optionally periodic) list, a
    closed-form rule producing integers, and a factored rule producing
    prime-exponent vectors. Point dynamics refuses factored levels.
    """

    def __init__(
        self,
        kind: str,
        *,
        values: Sequence[int] | None = None,
        periodic: bool = False,
        rule: Callable[[int], int] | None = None,
        factored_rule: Callable[[int], FactoredInt] | None = None,
        max_level: int | None = None,
        descriptor: dict | None = None,
    ):
        if kind not in ("explicit", "rule", "factored"):
            raise ConfigError(f"unknown sequence kind {kind!r}")
        self.kind = kind
        self._values = tuple(int(v) for v in values) if values is not None else None
        self._periodic = periodic
        self._rule = rule
        self._factored_rule = factored_rule
        self._lock = threading.Lock()
        self._q_cache: dict[int, int] = {}
        self._qf_cache: dict[int, FactoredInt] = {}
        self._h: list[int] = [1]
        self._hf: list[FactoredInt] = [FactoredInt.unit()]
        if kind == "explicit":
            if not self._values:
                raise ValidationError("explicit sequence needs at least one value")
            for n, v in enumerate(self._values):
                if v < 2:
                    raise ValidationError(f"q({n}) = {v} is smaller than 2")
            max_level = None if periodic else len(self._values)
        self.max_level = max_level
        self.descriptor = descriptor or {"kind": kind}

    @property
    def is_factored(self) -> bool:
        return self.kind == "factored"

    def has_level(self, n: int) -> bool:
        return n >= 0 and (self.max_level is None or n < self.max_level)

    def _check_level(self, n: int) -> None:
        if not self.has_level(n):
            raise Undetermined(f"level {n} is beyond the materialized levels (max {self.max_level})", needed=n + 1)

    def q(self, n: int) -> int:
        """Integer q(n). Raises on factored sequences, whose values are astronomically large."""
        self._check_level(n)
        if self.kind == "factored":
            raise PreconditionError(f"q({n}) is only available in factored form")
        if self.kind == "explicit":
            return self._values[n % len(self._values)]
        with self._lock:
            if n not in self._q_cache:
                v = int(self._rule(n))
                if v < 2:
                    raise ValidationError(f"rule produced q({n}) = {v} < 2")
                self._q_cache[n] = v
            return self._q_cache[n]

    def q_factored(self, n: int) -> FactoredInt:
        self._check_level(n)
        if self.kind != "factored":
            return FactoredInt.from_int(self.q(n))
        with self._lock:
            if n not in self._qf_cache:
                v = self._factored_rule(n)
                if v.is_one():
                    raise ValidationError(f"rule produced q({n}) = 1 < 2")
                self._qf_cache[n] = v
            return self._qf_cache[n]

    def h(self, n: int) -> int:
        if n < 0:
            raise ValidationError("negative level")
        if self.kind == "factored" and n > 0:
            raise PreconditionError(f"h({n}) is only available in factored form")
        with self._lock:
            cached = len(self._h)
        while cached <= n:
            v = self._h[cached - 1] * self.q(cached - 1)
            with self._lock:
                if len(self._h) == cached:
                    self._h.append(v)
                cached = len(self._h)
        return self._h[n]

    def h_factored(self, n: int) -> FactoredInt:
        while len(self._hf) <= n:
            k = len(self._hf)
            v = self._hf[k - 1] * self.q_factored(k - 1)
            with self._lock:
                if len(self._hf) == k:
                    self._hf.append(v)
        return self._hf[n]

    def log_q(self, n: int, prec: int = DEFAULT_PREC):
        return self.q_factored(n).log(prec) if self.is_factored else hp_log(self.q(n), prec)

    def log_h(self, n: int, prec: int = DEFAULT_PREC):
        return self.h_factored(n).log(prec) if self.is_factored else hp_log(self.h(n), prec)

    # -- points ---------------------------------------------------------

    def require_concrete(self) -> None:
        if self.is_factored:
            raise PreconditionError("point dynamics is disabled on factored sequences")

    def digit(self, p: Point, n: int) -> int:
        if n < len(p.prefix):
            return p.prefix[n]
        if p.tail is Tail.MIN:
            self._check_level(n)
            return 0
        if p.tail is Tail.MAX:
            return self.q(n) - 1
        raise Undetermined(f"digit {n} is not determined by a prefix of length {len(p.prefix)}", needed=n + 1)

    def digits(self, p: Point, m: int) -> list[int]:
        return [self.digit(p, n) for n in range(m)]

    def check_point(self, p: Point) -> Point:
        for n, d in enumerate(p.prefix):
            if not 0 <= d < self.q(n):
                raise ValidationError(f"digit {d} at level {n} is outside 0..{self.q(n) - 1}")
        return p

    def random_point(self, rng: random.Random, length: int, tail: Tail = Tail.UNSPECIFIED) -> Point:
        return Point(tuple(rng.randrange(self.q(n)) for n in range(length)), tail)

    def extend(self, p: Point, length: int, rng: random.Random) -> Point:
        """Append fresh uniform digits (Unspecified tails only)."""
        if p.tail is not Tail.UNSPECIFIED or len(p.prefix) >= length:
            return p
        extra = tuple(rng.randrange(self.q(n)) for n in range(len(p.prefix), length))
        return Point(p.prefix + extra, p.tail)

    def position(self, digits: Sequence[int], n: int | None = None) -> int:
        """The integer sum_{i<n} h(i) x_i."""
        if n is None:
            n = len(digits)
        total = 0
        for i in range(n - 1, -1, -1):
            total = total * self.q(i) + digits[i]
        return total

    def to_digits(self, value: int, n: int) -> list[int]:
        """Mixed-radix expansion of ``value`` in 0..h(n)-1 on the first n levels."""
        out = []
        for i in range(n):
            value, r = divmod(value, self.q(i))
            out.append(r)
        if value:
            raise ValidationError(f"{value} does not fit in {n} levels")
        return out

    def __repr__(self) -> str:
        return f"BaseSequence({self.descriptor})"


def make_space(spec) -> BaseSequence:
    """Build a BaseSequence from a descriptor.

    Accepted forms: an existing BaseSequence, a list of integers, or a dict
    such as ``{"kind": "explicit", "values": [3, 2, 3], "periodic": false}``,
    ``{"kind": "rule", "rule": "constant", "value": 6}`` or
    ``{"kind": "factored", "rule": "feldman"}``.
    """
    if isinstance(spec, BaseSequence):
        return spec
    if isinstance(spec, (list, tuple)):
        spec = {"kind": "explicit", "values": list(spec)}
    if not isinstance(spec, Mapping):
        raise ConfigError(f"unsupported sequence descriptor {spec!r}")
    spec = dict(spec)
    kind = spec.get("kind", "explicit")
    levels = spec.get("levels")
    if kind == "explicit":
        values = spec.get("values")
        if not isinstance(values, (list, tuple)) or not all(isinstance(v, int) for v in values):
            raise ConfigError("explicit sequence needs an integer list 'values'")
        return BaseSequence("explicit", values=values, periodic=bool(spec.get("periodic", False)), descriptor=spec)
    if kind == "rule":
        name = spec.get("rule")
        if name == "constant":
            value = int(spec["value"])
            if value < 2:
                raise ValidationError(f"q(0) = {value} is smaller than 2")
            fn = lambda n, v=value: v  # noqa: E731
        elif name == "double_exponential":
            fn = lambda n: 2 ** (2**n)  # noqa: E731
        elif name == "affine":
            a, b = int(spec.get("slope", 1)), int(spec.get("offset", 2))
            fn = lambda n: a * n + b  # noqa: E731
            if b < 2:
                raise ValidationError(f"q(0) = {b} is smaller than 2")
        elif name == "feldman_toy":
            fn = _rule_feldman_toy(spec.get("qt", [2]))
        else:
            raise ConfigError(f"unknown rule {name!r}")
        return BaseSequence("rule", rule=fn, max_level=levels, descriptor=spec)
    if kind == "factored":
        name = spec.get("rule", "feldman")
        if name != "feldman":
            raise ConfigError(f"unknown factored rule {name!r}")
        return BaseSequence(
            "factored", factored_rule=_rule_feldman_factored(int(spec.get("offset", 10))), max_level=levels, descriptor=spec
        )
    raise ConfigError(f"unknown sequence kind {kind!r}")


@dataclass(frozen=True)
class Cylinder:
    """Constraints on the first ``level`` digits; each is a sorted tuple of allowed digits."""

    constraints: tuple[tuple[int, ...], ...]

    @classmethod
    def of(cls, *parts: int | Iterable[int]) -> "Cylinder":
        cons = []
        for part in parts:
            if isinstance(part, int):
                cons.append((part,))
            else:
                vals = tuple(sorted(set(int(v) for v in part)))
                if not vals:
                    raise ValidationError("empty digit subset in cylinder")
                cons.append(vals)
        return cls(tuple(cons))

    @classmethod
    def whole(cls) -> "Cylinder":
        return cls(())

    @property
    def level(self) -> int:
        return len(self.constraints)

    def validate(self, space: BaseSequence) -> "Cylinder":
        for n, allowed in enumerate(self.constraints):
            if list(allowed) != sorted(set(allowed)) or not allowed:
                raise ValidationError(f"cylinder constraint at level {n} is not a sorted digit list")
            if allowed[0] < 0 or allowed[-1] >= space.q(n):
                raise ValidationError(f"cylinder constraint at level {n} leaves 0..{space.q(n) - 1}")
        return self

    def contains(self, digits: Sequence[int]) -> bool:
        return all(digits[n] in allowed for n, allowed in enumerate(self.constraints))

    def contains_point(self, space: BaseSequence, p: Point) -> bool:
        return self.contains(space.digits(p, self.level))


def cylinder_measure(space: BaseSequence, c: Cylinder) -> Fraction:
    c.validate(space)
    m = Fraction(1)
    for n, allowed in enumerate(c.constraints):
        m *= Fraction(len(allowed), space.q(n))
    return m


@dataclass(frozen=True)
class Partition:
    """P(l) (all l-cylinders) or the block-collapsed P~(l).

    For P~(l) the digit at level l-1 is only read through its block,
    described by ``block_sizes`` (consecutive blocks starting at 0).
    """

    kind: str
    level: int
    block_sizes: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("P", "P~"):
            raise ConfigError(f"unknown partition kind {self.kind!r}")
        if self.level < 0:
            raise ConfigError("negative partition level")
        if self.kind == "P~":
            if self.level < 1:
                raise ConfigError("P~(l) needs l >= 1")
            if not self.block_sizes:
                raise ConfigError("P~ requested without a multiplicity structure")

    def _block_of(self, x: int) -> int:
        acc = 0
        for j, size in enumerate(self.block_sizes):
            acc += size
            if x < acc:
                return j
        raise ValidationError(f"digit {x} is outside the block decomposition")

    def atom_count(self, space: BaseSequence) -> int:
        if self.kind == "P":
            return space.h(self.level)
        return space.h(self.level - 1) * len(self.block_sizes)

    def atom_index(self, space: BaseSequence, digits: Sequence[int]) -> int:
        if self.kind == "P":
            return space.position(digits, self.level)
        last = self.level - 1
        return space.position(digits, last) + space.h(last) * self._block_of(digits[last])

    def atom_of_point(self, space: BaseSequence, p: Point) -> int:
        return self.atom_index(space, space.digits(p, self.level))

    def project(self, space: BaseSequence, fine_index: int) -> int:
        """Map a P(l) atom index to the P~(l) atom containing it."""
        return self.atom_index(space, space.to_digits(fine_index, self.level))

    def atoms(self, space: BaseSequence) -> list[Cylinder]:
        if self.kind == "P":
            return [Cylinder.of(*space.to_digits(j, self.level)) for j in range(space.h(self.level))]
        last = self.level - 1
        out = []
        offsets = []
        acc = 0
        for size in self.block_sizes:
            offsets.append(range(acc, acc + size))
            acc += size
        if acc != space.q(last):
            raise ValidationError(f"blocks cover {acc} digits, level {last} has {space.q(last)}")
        for block in offsets:
            for j in range(space.h(last)):
                out.append(Cylinder.of(*space.to_digits(j, last), block))
        return out


def partition_atoms(space: BaseSequence, kind: str, level: int, multiplicity=None) -> list[Cylinder]:
    """Atoms of P(l) or P~(l), in atom-index order."""
    return make_partition(space, kind, level, multiplicity).atoms(space)


def make_partition(space: BaseSequence, kind: str, level: int, multiplicity=None) -> Partition:
    if kind == "P":
        return Partition("P", level)
    if multiplicity is None:
        raise ConfigError("P~ requested without a multiplicity structure")
    return Partition("P~", level, tuple(multiplicity.block_sizes(level - 1)))
