"""Per-level permutation families sigma^(n)_i and their generators.

sigma^(n)_i is a permutation of {0..q(n)-1}, indexed by the next digit
i in {0..q(n+1)-1}. Tables are stored together with their inverses so
that both directions are a lookup.
"""
from __future__ import annotations

import math
import random
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .errors import ConfigError, InfeasibleError, InternalError, ResourceError, Undetermined, ValidationError
from .space import BaseSequence, make_space

Perm = tuple[int, ...]

# tables above this size are never materialized implicitly
TABLE_LIMIT = 1 << 22


def invert(perm: Sequence[int]) -> Perm:
    inv = [0] * len(perm)
    for k, v in enumerate(perm):
        inv[v] = k
    return tuple(inv)


def is_permutation(perm: Sequence[int]) -> bool:
    return sorted(perm) == list(range(len(perm)))


def unrank(rank: int, items: Sequence[int]) -> list[int]:
    """The ``rank``-th permutation of ``items`` in lexicographic order."""
    pool = list(items)
    out = []
    for k in range(len(pool), 0, -1):
        f = math.factorial(k - 1)
        idx, rank = divmod(rank, f)
        out.append(pool.pop(idx))
    return out


def factorial_at_least(m: int, bound: int) -> bool:
    """Whether m! >= bound, without building a huge factorial."""
    acc = 1
    for k in range(2, m + 1):
        acc *= k
        if acc >= bound:
            return True
    return acc >= bound


def _seeded(seed, *parts) -> random.Random:
    return random.Random(":".join(str(p) for p in (seed,) + parts))


@dataclass(frozen=True)
class MultiplicityStructure:
    """Block decompositions I^(n)_j of each digit set.

    ``sizes`` maps a level to its block sizes; the uniform case has
    q~(n) blocks of size c(n).
    """

    sizes: Callable[[int], tuple[int, ...]]
    uniform: bool = False
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @classmethod
    def uniform_blocks(cls, c: Callable[[int], int], qt: Callable[[int], int]) -> "MultiplicityStructure":
        return cls(lambda n: (c(n),) * qt(n), uniform=True)

    def block_sizes(self, n: int) -> tuple[int, ...]:
        if n not in self._cache:
            self._cache[n] = tuple(self.sizes(n))
        return self._cache[n]

    def c(self, n: int) -> int:
        sizes = self.block_sizes(n)
        if len(set(sizes)) != 1:
            raise ConfigError(f"level {n} has non-uniform blocks")
        return sizes[0]

    def qt(self, n: int) -> int:
        return len(self.block_sizes(n))

    def block_of(self, n: int, x: int) -> int:
        sizes = self.block_sizes(n)
        if len(set(sizes)) == 1:
            return x // sizes[0]
        acc = 0
        for j, s in enumerate(sizes):
            acc += s
            if x < acc:
                return j
        raise ValidationError(f"digit {x} outside the blocks of level {n}")

    def block(self, n: int, j: int) -> range:
        sizes = self.block_sizes(n)
        start = sum(sizes[:j])
        return range(start, start + sizes[j])


class PermutationFamily:
    """Base class. Subclasses implement ``sigma`` and ``sigma_inv``."""

    name = "family"

    def __init__(self, space: BaseSequence, *, fixes_zero: bool = False, fixes_max: bool = False,
                 multiplicity: MultiplicityStructure | None = None, params: dict | None = None):
        self.space = space
        self.fixes_zero = fixes_zero
        self.fixes_max = fixes_max
        self.multiplicity = multiplicity
        self.params = params or {}

    def has_level(self, n: int) -> bool:
        return self.space.has_level(n) and self.space.has_level(n + 1)

    def sigma(self, n: int, i: int, x: int) -> int:
        raise NotImplementedError

    def sigma_inv(self, n: int, i: int, x: int) -> int:
        raise NotImplementedError

    def table(self, n: int, i: int) -> Perm:
        q = self.space.q(n)
        if q > TABLE_LIMIT:
            raise ResourceError(f"permutation table at level {n} would have {q} entries")
        return tuple(self.sigma(n, i, x) for x in range(q))

    def tables(self, n: int) -> list[Perm]:
        return [self.table(n, i) for i in range(self.space.q(n + 1))]

    def describe(self) -> dict:
        return {"name": self.name, "fixes_zero": self.fixes_zero, "fixes_max": self.fixes_max, **self.params}


class IdentityFamily(PermutationFamily):
    name = "identity"

    def __init__(self, space):
        super().__init__(space, fixes_zero=True, fixes_max=True)

    def sigma(self, n, i, x):
        return x

    sigma_inv = sigma


class CyclicFamily(PermutationFamily):
    """sigma^(n)_i(x) = x + i mod q(n)."""

    name = "cyclic"

    def sigma(self, n, i, x):
        return (x + i) % self.space.q(n)

    def sigma_inv(self, n, i, x):
        return (x - i) % self.space.q(n)


class TableFamily(PermutationFamily):
    """Families stored as explicit tables, produced lazily one level at a time.

    ``provider(n)`` returns the list of permutations at level n. With a
    multiplicity structure the provider returns the base permutations
    tau^(n)_j, and sigma^(n)_i = tau^(n)_j for i in block j of level n+1.
    """

    def __init__(self, space, provider: Callable[[int], Sequence[Sequence[int]]], *, name: str = "table", **kw):
        super().__init__(space, **kw)
        self.name = name
        self._provider = provider
        self._levels: dict[int, tuple[list[Perm], list[Perm]]] = {}
        self._lock = threading.Lock()
        self.feldman: FeldmanParams | None = None

    def _level(self, n: int):
        got = self._levels.get(n)
        if got is None:
            if not self.has_level(n):
                raise Undetermined(f"family level {n} is not materialized", needed=n + 2)
            perms = [tuple(int(v) for v in p) for p in self._provider(n)]
            q = self.space.q(n)
            for j, p in enumerate(perms):
                if len(p) != q or not is_permutation(p):
                    raise ValidationError(f"entry {j} at level {n} is not a permutation of 0..{q - 1}")
            got = (perms, [invert(p) for p in perms])
            with self._lock:
                self._levels.setdefault(n, got)
        return got

    def _index(self, n: int, i: int) -> int:
        if self.multiplicity is None:
            return i
        return self.multiplicity.block_of(n + 1, i)

    def base_tables(self, n: int) -> list[Perm]:
        return list(self._level(n)[0])

    def sigma(self, n, i, x):
        return self._level(n)[0][self._index(n, i)][x]

    def sigma_inv(self, n, i, x):
        return self._level(n)[1][self._index(n, i)][x]

    def table(self, n, i):
        return self._level(n)[0][self._index(n, i)]


# -- generators -------------------------------------------------------------


def identity_family(space) -> PermutationFamily:
    return IdentityFamily(make_space(space))


def cyclic_family(space) -> PermutationFamily:
    return CyclicFamily(make_space(space))


def dyadic_swap_family(space) -> PermutationFamily:
    """sigma^(n)_0 = identity, sigma^(n)_1 = the transposition of {0, 1}; needs q = 2."""
    space = make_space(space)

    def provider(n):
        if space.q(n) != 2 or space.q(n + 1) != 2:
            raise ValidationError(f"the swap family needs q({n}) = q({n + 1}) = 2")
        return [(0, 1), (1, 0)]

    return TableFamily(space, provider, name="dyadic_swap")


def table_family(space, tables: Mapping[int, Sequence[Sequence[int]]], *, periodic: bool = False,
                 fixes_zero: bool = False, fixes_max: bool = False) -> PermutationFamily:
    """A family from explicit tables, level -> list of permutation arrays."""
    space = make_space(space)
    tables = {int(k): v for k, v in tables.items()}
    keys = sorted(tables)

    def provider(n):
        key = keys[n % len(keys)] if periodic else n
        if key not in tables:
            raise ConfigError(f"no permutation table for level {n}")
        perms = tables[key]
        if len(perms) != space.q(n + 1):
            raise ValidationError(f"level {n} has {len(perms)} permutations, expected q({n + 1}) = {space.q(n + 1)}")
        return perms

    return TableFamily(space, provider, name="table", fixes_zero=fixes_zero, fixes_max=fixes_max)


def _interior_perm(q: int, interior: Sequence[int]) -> Perm:
    return (0,) + tuple(interior) + tuple(range(len(interior) + 1, q))


def _distinct_interiors(rng: random.Random, m: int, count: int) -> list[list[int]]:
    items = list(range(1, m + 1))
    if not factorial_at_least(m, count):
        raise InfeasibleError(f"only {math.factorial(m)} permutations of {m} interior points, {count} requested")
    if not factorial_at_least(m, 10**6 + 1):
        ranks = rng.sample(range(math.factorial(m)), count)
        return [unrank(r, items) for r in ranks]
    seen: set[tuple[int, ...]] = set()
    out = []
    tries = 0
    while len(out) < count:
        tries += 1
        if tries > 100 * count + 100:
            raise ResourceError("rejection sampling of distinct permutations did not finish")
        cand = items[:]
        rng.shuffle(cand)
        key = tuple(cand)
        if key not in seen:
            seen.add(key)
            out.append(cand)
    return out


def random_fixed_endpoint_family(space, seed, distinct: bool = False) -> PermutationFamily:
    """Uniform random permutations fixing 0 and q(n)-1, deterministic per seed and level."""
    space = make_space(space)

    def provider(n):
        q, count = space.q(n), space.q(n + 1)
        m = q - 2
        rng = _seeded(seed, "endpoint", n)
        if distinct:
            if not factorial_at_least(m, count):
                raise InfeasibleError(f"level {n}: q({n + 1}) = {count} > (q({n}) - 2)! = {math.factorial(m)}")
            return [_interior_perm(q, inner) for inner in _distinct_interiors(rng, m, count)]
        out = []
        for _ in range(count):
            inner = list(range(1, m + 1))
            rng.shuffle(inner)
            out.append(_interior_perm(q, inner))
        return out

    return TableFamily(space, provider, name="random_fixed_endpoint", fixes_zero=True, fixes_max=True,
                       params={"seed": seed, "distinct": distinct})


def entropy_index(q: int, q_next: int) -> int:
    """The least i in {2..q-2} with (i-1)! < q_next <= i!."""
    for i in range(2, q - 1):
        if factorial_at_least(i, q_next):
            return i
    raise InfeasibleError(f"q_next = {q_next} exceeds ({q} - 2)!")


def entropy_family(space, seed) -> PermutationFamily:
    """Pairwise distinct permutations moving only {1..i_n}."""
    space = make_space(space)

    def provider(n):
        q, count = space.q(n), space.q(n + 1)
        if q < 4 or not factorial_at_least(q - 2, count):
            raise InfeasibleError(f"level {n}: q({n + 1}) = {count} > (q({n}) - 2)!")
        i_n = entropy_index(q, count)
        rng = _seeded(seed, "entropy", n)
        return [_interior_perm(q, inner) for inner in _distinct_interiors(rng, i_n, count)]

    return TableFamily(space, provider, name="entropy", fixes_zero=True, fixes_max=True, params={"seed": seed})


def multiplicity_family(space, c: Callable[[int], int], qt: Callable[[int], int],
                        taus: Callable[[int], Sequence[Sequence[int]]], *, name: str = "multiple",
                        fixes_zero: bool = False, fixes_max: bool = False) -> TableFamily:
    """A uniformly c-multiple family from base permutations tau^(n)_j, j < q~(n+1)."""
    space = make_space(space)
    mult = MultiplicityStructure.uniform_blocks(c, qt)
    for n in range(3):
        if space.has_level(n) and c(n) * qt(n) != space.q(n):
            raise ValidationError(f"q({n}) = {space.q(n)} is not c * q~ = {c(n)} * {qt(n)}")
    return TableFamily(space, taus, name=name, multiplicity=mult, fixes_zero=fixes_zero, fixes_max=fixes_max)


# -- Feldman words ------------------------------------------------------------


@dataclass(frozen=True)
class FeldmanParams:
    """q~ values, repeated periodically. The classical choice q~(n) = 2^(n+10) is only
    usable through exponent arithmetic; toy values keep everything explicit."""

    qt: tuple[int, ...] = (2,)
    letter_budget: int = 1 << 22

    def qtilde(self, n: int) -> int:
        return self.qt[n % len(self.qt)]

    def q(self, n: int) -> int:
        return self.qtilde(n) ** (2 * self.qtilde(n + 1) + 3)

    def c(self, n: int) -> int:
        return self.q(n) // self.qtilde(n)

    def space(self) -> BaseSequence:
        return make_space({"kind": "rule", "rule": "feldman_toy", "qt": list(self.qt)})


@dataclass(frozen=True)
class FeldmanWordSystem:
    alphabet_size: int
    level: int
    words: tuple[tuple[int, ...], ...]
    repeat_inner: tuple[int, ...]
    repeat_outer: tuple[int, ...]


def feldman_block_pattern(params: FeldmanParams, n: int, j: int) -> list[int]:
    """Which a^(n)-word fills each of the q(n) slots of a^(n+1)_j."""
    qt, qt_next = params.qtilde(n), params.qtilde(n + 1)
    inner, outer = qt ** (2 * (j + 1)), qt ** (2 * (qt_next - j))
    unit = [b for b in range(qt) for _ in range(inner)]
    return unit * outer


def feldman_words(params: FeldmanParams, n: int) -> FeldmanWordSystem:
    words: list[tuple[int, ...]] = [(b,) for b in range(params.qtilde(0))]
    length = 1
    for k in range(n):
        length *= params.q(k)
        if length * params.qtilde(k + 1) > params.letter_budget:
            raise ResourceError(f"level {k + 1} words need {length * params.qtilde(k + 1)} letters")
        words = [tuple(letter for b in feldman_block_pattern(params, k, j) for letter in words[b])
                 for j in range(params.qtilde(k + 1))]
    if n == 0:
        inner = outer = ()
    else:
        qt, qt_n = params.qtilde(n - 1), params.qtilde(n)
        inner = tuple(qt ** (2 * (j + 1)) for j in range(qt_n))
        outer = tuple(qt ** (2 * (qt_n - j)) for j in range(qt_n))
    return FeldmanWordSystem(params.qtilde(0), n, tuple(words), inner, outer)


def feldman_taus(params: FeldmanParams, n: int) -> list[Perm]:
    """Base permutations at level n, one per j < q~(n+1).

    The tower-word recursion places the word of digit sigma^-1(k) in slot k,
    so sigma^-1(k) is taken as the next unused digit of the block the
    target word wants in slot k. Slot 0 always wants block 0, hence
    sigma(0) = 0.
    """
    q, c = params.q(n), params.c(n)
    if q > TABLE_LIMIT:
        raise ResourceError(f"level {n} tables need {q} entries")
    out = []
    for j in range(params.qtilde(n + 1)):
        used = [0] * params.qtilde(n)
        inv = []
        for b in feldman_block_pattern(params, n, j):
            inv.append(b * c + used[b])
            used[b] += 1
        if any(u != c for u in used):
            raise InternalError("Feldman block pattern is not a rearrangement of u")
        out.append(invert(inv))
    return out


def arrange(u: Sequence, perm: Sequence[int]) -> list:
    """Slot k receives u[perm^-1(k)], the order in which tower words are concatenated."""
    inv = invert(perm)
    return [u[inv[k]] for k in range(len(perm))]


def feldman_family(params: FeldmanParams) -> TableFamily:
    space = params.space()
    fam = multiplicity_family(space, params.c, params.qtilde, lambda n: feldman_taus(params, n),
                              name="feldman", fixes_zero=True)
    fam.params = {"qt": list(params.qt)}
    fam.feldman = params
    return fam


# -- validation -------------------------------------------------------------


@dataclass
class FamilyReport:
    levels: list[int]
    ok: bool
    violations: list[dict]
    fixed_point_sizes: dict[int, int]
    fixed_point_density: dict[int, str]
    distinct_counts: dict[int, int]
    skipped: list[int]

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "levels": self.levels,
            "violations": self.violations,
            "fixed_point_sizes": {str(k): v for k, v in self.fixed_point_sizes.items()},
            "fixed_point_density": {str(k): v for k, v in self.fixed_point_density.items()},
            "distinct_counts": {str(k): v for k, v in self.distinct_counts.items()},
            "skipped_levels": self.skipped,
        }


def default_levels(space: BaseSequence, n_max: int | None = None, cap: int = 6) -> list[int]:
    top = cap if n_max is None else n_max + 1
    return [n for n in range(top) if space.has_level(n + 1)]


def validate_family(space, family: PermutationFamily, flags: Iterable[str] = (), n_max: int | None = None,
                    work_limit: int = 1 << 24) -> FamilyReport:
    """Check bijectivity, claimed endpoint fixing, distinctness and block constancy.

    ``flags`` may contain "fixes_zero", "fixes_max", "distinct"; claimed
    flags of the family are always checked.
    """
    from fractions import Fraction

    space = make_space(space)
    flags = set(flags)
    if family.fixes_zero:
        flags.add("fixes_zero")
    if family.fixes_max:
        flags.add("fixes_max")
    violations: list[dict] = []
    sizes, dens, distinct, skipped = {}, {}, {}, []
    levels = default_levels(space, n_max)
    for n in levels:
        q, qn = space.q(n), space.q(n + 1)
        if q * qn > work_limit:
            skipped.append(n)
            continue
        try:
            tabs = family.tables(n)
        except ValidationError as exc:
            violations.append({"level": n, "index": None, "problem": str(exc)})
            continue
        common = set(range(q))
        for i, t in enumerate(tabs):
            if not is_permutation(t):
                violations.append({"level": n, "index": i, "problem": "not a bijection"})
                continue
            if any(family.sigma_inv(n, i, t[x]) != x for x in range(q)):
                violations.append({"level": n, "index": i, "problem": "stored inverse disagrees"})
            if "fixes_zero" in flags and t[0] != 0:
                violations.append({"level": n, "index": i, "problem": "does not fix 0"})
            if "fixes_max" in flags and t[q - 1] != q - 1:
                violations.append({"level": n, "index": i, "problem": f"does not fix {q - 1}"})
            common &= {x for x in range(q) if t[x] == x}
        distinct[n] = len(set(tabs))
        if "distinct" in flags and distinct[n] != qn:
            violations.append({"level": n, "index": None, "problem": f"only {distinct[n]} distinct of {qn}"})
        mult = family.multiplicity
        if mult is not None:
            for j in range(mult.qt(n + 1)):
                blk = mult.block(n + 1, j)
                first = tabs[blk.start]
                for i in blk:
                    if tabs[i] != first:
                        violations.append({"level": n, "index": i, "problem": f"not constant on block {j}"})
                        break
        sizes[n] = len(common)
        dens[n] = str(Fraction(len(common), q))
    return FamilyReport(levels, not violations, violations, sizes, dens, distinct, skipped)


def kappa(family: TableFamily, n: int) -> int | None:
    """Degree of j -> (tau_j(I_0), ..., tau_j(I_{q~-1})) as sets, or None when not uniform."""
    mult = family.multiplicity
    if mult is None:
        raise ConfigError("kappa needs a multiplicity structure")
    taus = family.base_tables(n)
    blocks = [mult.block(n, b) for b in range(mult.qt(n))]
    fibres: dict = {}
    for j, t in enumerate(taus):
        key = tuple(frozenset(t[x] for x in blk) for blk in blocks)
        fibres[key] = fibres.get(key, 0) + 1
    degrees = set(fibres.values())
    return degrees.pop() if len(degrees) == 1 else None


def family_from_config(space: BaseSequence, spec: Mapping) -> PermutationFamily:
    preset = spec.get("preset", "identity")
    if preset == "identity":
        return identity_family(space)
    if preset == "cyclic":
        return cyclic_family(space)
    if preset == "dyadic_swap":
        return dyadic_swap_family(space)
    if preset in ("random_fixed_endpoint", "entropy"):
        if "seed" not in spec:
            raise ConfigError(f"preset {preset!r} needs a seed")
        if preset == "entropy":
            return entropy_family(space, spec["seed"])
        return random_fixed_endpoint_family(space, spec["seed"], bool(spec.get("distinct", False)))
    if preset == "table":
        return table_family(space, spec["tables"], periodic=bool(spec.get("periodic", False)),
                            fixes_zero=bool(spec.get("fixes_zero", False)), fixes_max=bool(spec.get("fixes_max", False)))
    if preset == "feldman":
        raise ConfigError("the feldman preset defines its own space; use space kind 'feldman_toy'")
    raise ConfigError(f"unknown family preset {preset!r}")
