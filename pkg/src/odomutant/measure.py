"""Exact check that T pulls cylinders back to sets of the same measure.

For a level L and a digit x_L, the map F = psi_{L-1}^-1 (+1 mod h_L) psi_{L-1}
permutes the length-L prefixes. It equals T on every prefix whose psi-image
is not all maximal, and those exceptional prefixes carry mass 1/h_L. So the
F-pullback gives the measure of the T-pullback up to a set that vanishes as
L grows, while every finite F is checked against T directly.

Two routes compute the F-pullback: plain enumeration of every prefix, and a
count by carry level, which only walks the digits F can change and weighs
the untouched ones by their multiplicity. The second reaches much larger
alphabets and is checked against the first on small systems.
"""
from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product

from .dynamics import OdomutantSystem, apply_T
from .errors import ConfigError, ResourceError
from .space import Cylinder, Point, Tail, cylinder_measure

PROBE_LIMIT = 1 << 20
LEVEL_LIMIT = 1 << 23


def _psi_prefix(system: OdomutantSystem, w: tuple[int, ...], above: int) -> list[int]:
    fam = system.family
    L = len(w)
    nxt = list(w[1:]) + [above]
    return [fam.sigma(i, nxt[i], w[i]) for i in range(L)]


def _unpsi_prefix(system: OdomutantSystem, v: list[int], above: int) -> tuple[int, ...]:
    fam = system.family
    out = [0] * len(v)
    for i in range(len(v) - 1, -1, -1):
        out[i] = fam.sigma_inv(i, out[i + 1] if i + 1 < len(v) else above, v[i])
    return tuple(out)


def level_map(system: OdomutantSystem, w: tuple[int, ...], above: int) -> tuple[tuple[int, ...], bool]:
    """F(w) for the given digit x_L, and whether w is one of the wrapping prefixes."""
    sp = system.space
    v = _psi_prefix(system, w, above)
    L = len(w)
    j = sp.position(v, L)
    wrap = j == sp.h(L) - 1
    return _unpsi_prefix(system, sp.to_digits((j + 1) % sp.h(L), L), above), wrap


@dataclass
class ProbeReport:
    level: int
    L: int
    cylinders: int
    mismatches: list[dict] = field(default_factory=list)
    disagreements: int = 0
    non_bijective: list[int] = field(default_factory=list)
    wrap_mass: Fraction = Fraction(0)

    @property
    def ok(self) -> bool:
        return not (self.mismatches or self.disagreements or self.non_bijective)

    def to_json(self) -> dict:
        return {"level": self.level, "L": self.L, "cylinders": self.cylinders, "measure_mismatches": self.mismatches,
                "disagreements_with_T": self.disagreements, "non_bijective_digits": self.non_bijective,
                "wrap_mass": str(self.wrap_mass), "ok": self.ok}


def measure_probe(system: OdomutantSystem, level: int, L: int | None = None, check_T: bool = True,
                  limit: int = PROBE_LIMIT) -> ProbeReport:
    """Compare mu(F^-1 c) with mu(c) for every cylinder c of the given level."""
    sp = system.space
    L = max(level, 1) if L is None else L
    if L < level:
        raise ConfigError("L must be at least the cylinder level")
    if sp.h(L + 1) > limit:
        raise ResourceError(f"the probe at L={L} visits {sp.h(L + 1)} prefixes (limit {limit})")
    hits: Counter = Counter()
    rep = ProbeReport(level, L, sp.h(level))
    unit = Fraction(1, sp.h(L + 1))
    for above in range(sp.q(L)):
        images = set()
        for w in product(*[range(sp.q(i)) for i in range(L)]):
            img, wrap = level_map(system, w, above)
            images.add(img)
            hits[img[:level]] += 1
            if wrap:
                rep.wrap_mass += unit
            elif check_T:
                y = apply_T(system, Point(w + (above,), Tail.UNSPECIFIED))
                if tuple(sp.digits(y, L)) != img:
                    rep.disagreements += 1
        if len(images) != sp.h(L):
            rep.non_bijective.append(above)
    for idx in range(sp.h(level)):
        digits = tuple(sp.to_digits(idx, level))
        pulled = hits[digits] * unit
        mu = cylinder_measure(sp, Cylinder.of(*digits))
        if pulled != mu:
            rep.mismatches.append({"cylinder": list(digits), "pullback": str(pulled), "measure": str(mu)})
    return rep


def carry_level_counts(system: OdomutantSystem, level: int, limit: int = LEVEL_LIMIT) -> tuple[Counter, int]:
    """How many length-(level+1) prefixes F sends into each level-cylinder, by carry level.

    With k the first psi-digit that is not maximal, F rewrites digits 0..k
    and copies the rest; the digits below k of the preimage are forced. So
    for k < level - 1 the top digit only contributes a factor q_level. The
    second value is the number of wrapping prefixes (one per top digit).
    """
    sp, fam = system.space, system.family
    L = max(level, 1)
    qs = [sp.q(i) for i in range(L + 1)]
    work = sum(sp.h(L) // sp.h(k) for k in range(L)) + qs[L - 1] * qs[L]
    if work > limit:
        raise ResourceError(f"the carry-level count at level {L} takes {work} steps (limit {limit})")
    hits: Counter = Counter()

    def bottom_below(k: int, digit: int) -> list[int]:
        out = [0] * k
        for i in range(k - 1, -1, -1):
            digit = fam.sigma_inv(i, digit, 0)
            out[i] = digit
        return out

    for k in range(L):
        weight = 1 if k == L - 1 else qs[L]
        top = L + 1 if k == L - 1 else L  # digits k+1.. that the image depends on
        heads: dict[int, list[tuple[int, ...]]] = {}
        for rest in product(*[range(qs[i]) for i in range(k + 1, top)]):
            up = rest[0] if rest else None
            if up not in heads:
                # the rewritten digits 0..k for every non-maximal psi-digit at k
                heads[up] = [tuple(bottom_below(k, fam.sigma_inv(k, up, y + 1))) + (fam.sigma_inv(k, up, y + 1),)
                             for y in range(qs[k] - 1)]
            tail = rest[:L - k - 1]
            for head in heads[up]:
                hits[(head + tail)[:level]] += weight
    for above in range(qs[L]):
        hits[tuple(bottom_below(L, above))[:level]] += 1
    return hits, qs[L]


def sampled_agreement(system: OdomutantSystem, L: int, samples: int, seed) -> tuple[int, int]:
    """(checked, disagreements) of F against T on seeded non-wrapping prefixes of length L+1."""
    sp = system.space
    rng = random.Random(f"{seed}:probe")
    checked = bad = 0
    for _ in range(samples):
        w = tuple(rng.randrange(sp.q(i)) for i in range(L))
        above = rng.randrange(sp.q(L))
        img, wrap = level_map(system, w, above)
        if wrap:
            continue
        checked += 1
        y = apply_T(system, Point(w + (above,), Tail.UNSPECIFIED))
        if tuple(sp.digits(y, L)) != img:
            bad += 1
    return checked, bad


def measure_probe_by_levels(system: OdomutantSystem, level: int, samples: int = 1000, seed=0,
                            limit: int = LEVEL_LIMIT) -> ProbeReport:
    """The probe with L = level via carry-level counts; F is compared with T on samples only."""
    sp = system.space
    L = max(level, 1)
    hits, wraps = carry_level_counts(system, level, limit)
    rep = ProbeReport(level, L, sp.h(level))
    unit = Fraction(1, sp.h(L + 1))
    rep.wrap_mass = wraps * unit
    if sum(hits.values()) != sp.h(L + 1):
        rep.non_bijective.append(-1)
    _, rep.disagreements = sampled_agreement(system, L, samples, seed)
    # every level-cylinder has mass 1/h_level, i.e. h_{L+1}/h_level prefixes
    want = sp.h(L + 1) // sp.h(level)
    if len(hits) != sp.h(level):
        rep.mismatches.append({"cylinder": None, "pullback": f"{len(hits)} cylinders hit", "measure": str(sp.h(level))})
    for digits, count in sorted(hits.items()):
        if count != want:
            rep.mismatches.append({"cylinder": list(digits), "pullback": str(count * unit),
                                   "measure": str(cylinder_measure(sp, Cylinder.of(*digits)))})
    return rep
