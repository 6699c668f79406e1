"""Finite ordered Bratteli diagrams, the Vershik map on path prefixes, and the odomutant encoding.

Vertices are integers per level (level 0 is the root). An edge of E_k goes
from a vertex of level k to a vertex of level k+1 and is identified by its
range and rank, since ranks are a linear order on the edges entering a
vertex.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass
from typing import Sequence

from .dynamics import OdomutantSystem, apply_T, with_extension
from .errors import ConfigError, DomainError, PreconditionError, Undetermined, ValidationError
from .space import Point, Tail

Edge = tuple[int, int, int]  # (source, range, rank)


class BratteliDiagram:
    def __init__(self, levels: Sequence[int], edges: Sequence[Sequence[Edge]]):
        self.levels = tuple(int(v) for v in levels)
        if not self.levels or self.levels[0] != 1:
            raise ValidationError("level 0 must consist of the root alone")
        if len(edges) != len(self.levels) - 1:
            raise ValidationError(f"{len(self.levels)} levels need {len(self.levels) - 1} edge sets")
        self.edges = tuple(tuple(sorted((int(s), int(r), int(k)) for s, r, k in level)) for level in edges)
        self._into: list[dict[int, list[int]]] = []
        for k, level in enumerate(self.edges):
            into: dict[int, dict[int, int]] = {}
            for s, r, rank in level:
                if not (0 <= s < self.levels[k] and 0 <= r < self.levels[k + 1]):
                    raise ValidationError(f"edge {(s, r, rank)} of E_{k} has an endpoint outside its level")
                if rank in into.setdefault(r, {}):
                    raise ValidationError(f"two edges of rank {rank} enter vertex {r} of level {k + 1}")
                into[r][rank] = s
            table = {}
            for r in range(self.levels[k + 1]):
                ranks = into.get(r, {})
                if not ranks:
                    raise ValidationError(f"vertex {r} of level {k + 1} has no incoming edge")
                if sorted(ranks) != list(range(len(ranks))):
                    raise ValidationError(f"ranks into vertex {r} of level {k + 1} are not 0..{len(ranks) - 1}")
                table[r] = [ranks[i] for i in range(len(ranks))]
            sources = {s for s, _, _ in level}
            if len(sources) != self.levels[k]:
                raise ValidationError(f"some vertex of level {k} has no outgoing edge")
            self._into.append(table)

    @property
    def depth(self) -> int:
        return len(self.edges)

    def in_degree(self, k: int, r: int) -> int:
        """Number of edges of E_k entering vertex r of level k+1."""
        return len(self._into[k][r])

    def source(self, k: int, r: int, rank: int) -> int:
        return self._into[k][r][rank]

    def edge(self, k: int, r: int, rank: int) -> Edge:
        return (self.source(k, r, rank), r, rank)

    def __eq__(self, other) -> bool:
        return isinstance(other, BratteliDiagram) and self.levels == other.levels and self.edges == other.edges

    def __repr__(self) -> str:
        return f"BratteliDiagram(levels={list(self.levels)}, edges={sum(map(len, self.edges))})"


@dataclass(frozen=True)
class PathPoint:
    """A path prefix e_0, e_1, ... with a tail policy.

    Beyond the prefix a MIN tail runs through vertex 0 of every level using
    the lowest-ranked connecting edge, a MAX tail through the last vertex
    using the highest-ranked one. These mirror the zero and maximal digit
    tails of points.
    """

    edges: tuple[Edge, ...]
    tail: Tail = Tail.UNSPECIFIED

    def check(self, diagram: BratteliDiagram) -> "PathPoint":
        prev = 0
        for k, (s, r, rank) in enumerate(self.edges):
            if k >= diagram.depth:
                raise ValidationError("path is longer than the diagram")
            if s != prev:
                raise ValidationError(f"edge {k} does not start where edge {k - 1} ends")
            try:
                known = diagram.source(k, r, rank)
            except (IndexError, KeyError):
                known = None
            if known != s:
                raise ValidationError(f"no edge {(s, r, rank)} in E_{k}")
            prev = r
        return self

    def to_json(self) -> dict:
        return {"edges": [list(e) for e in self.edges], "tail": self.tail.value}


def _tail_edge(diagram: BratteliDiagram, k: int, s: int, tail: Tail) -> Edge:
    target = 0 if tail is Tail.MIN else diagram.levels[k + 1] - 1
    ranks = [rank for rank, src in enumerate(diagram._into[k][target]) if src == s]
    if not ranks:
        raise DomainError(f"the {tail.value} tail has no edge from vertex {s} of level {k}")
    return (s, target, min(ranks) if tail is Tail.MIN else max(ranks))


def edge_at(diagram: BratteliDiagram, path: PathPoint, k: int) -> Edge:
    if k >= diagram.depth:
        raise Undetermined(f"edge {k} is beyond the diagram depth {diagram.depth}", needed=k + 1)
    if k < len(path.edges):
        return path.edges[k]
    if path.tail is Tail.UNSPECIFIED:
        raise Undetermined(f"edge {k} is not determined", needed=k + 1)
    s = path.edges[-1][1] if path.edges else 0
    for j in range(len(path.edges), k + 1):
        e = _tail_edge(diagram, j, s, path.tail)
        s = e[1]
    return e


def materialize(diagram: BratteliDiagram, path: PathPoint, length: int | None = None) -> tuple[Edge, ...]:
    length = diagram.depth if length is None else length
    return tuple(edge_at(diagram, path, k) for k in range(length))


def min_path(diagram: BratteliDiagram) -> PathPoint:
    p = PathPoint((), Tail.MIN)
    if any(e[2] != 0 for e in materialize(diagram, p)):
        raise PreconditionError("the vertex-0 path is not the minimal path of this diagram")
    return p


def max_path(diagram: BratteliDiagram) -> PathPoint:
    p = PathPoint((), Tail.MAX)
    if any(rank != diagram.in_degree(k, r) - 1 for k, (_, r, rank) in enumerate(materialize(diagram, p))):
        raise PreconditionError("the last-vertex path is not the maximal path of this diagram")
    return p


def _backward_images(diagram: BratteliDiagram, pick) -> list[set[int]]:
    """For each level below the top, the vertices reached from the top by following ``pick`` edges down."""
    current = set(range(diagram.levels[-1]))
    out = [current]
    for k in range(diagram.depth - 1, -1, -1):
        current = {diagram.source(k, r, pick(k, r)) for r in current}
        out.append(current)
    return out[::-1]


def is_properly_ordered(diagram: BratteliDiagram) -> bool:
    """Unique minimal and maximal paths, judged at the available depth.

    Following minimal (or maximal) edges down from every top vertex must
    reach a single vertex at every level below the top.
    """
    lows = _backward_images(diagram, lambda k, r: 0)
    highs = _backward_images(diagram, lambda k, r: diagram.in_degree(k, r) - 1)
    return all(len(s) == 1 for s in lows[:-1]) and all(len(s) == 1 for s in highs[:-1])


def _minimal_down_to(diagram: BratteliDiagram, k: int, v: int) -> list[Edge]:
    """The minimal path from the root to vertex v of level k."""
    out = []
    for j in range(k - 1, -1, -1):
        e = diagram.edge(j, v, 0)
        out.append(e)
        v = e[0]
    return out[::-1]


def vershik_apply(diagram: BratteliDiagram, path: PathPoint) -> PathPoint:
    """Successor: raise the first non-maximal edge, then restart along the minimal path."""
    for k in range(diagram.depth):
        s, r, rank = edge_at(diagram, path, k)
        if rank < diagram.in_degree(k, r) - 1:
            new = diagram.edge(k, r, rank + 1)
            below = _minimal_down_to(diagram, k, new[0])
            keep = max(len(path.edges), k + 1)
            rest = tuple(edge_at(diagram, path, j) for j in range(k + 1, keep))
            return PathPoint(tuple(below) + (new,) + rest, path.tail)
    if path.tail is Tail.MAX:
        if not is_properly_ordered(diagram):
            raise DomainError("the maximal path has no successor in a diagram that is not properly ordered")
        return min_path(diagram)
    raise Undetermined("every edge up to the diagram depth is maximal", needed=diagram.depth + 1)


def same_path(diagram: BratteliDiagram, a: PathPoint, b: PathPoint, length: int | None = None) -> bool:
    return materialize(diagram, a, length) == materialize(diagram, b, length)


# -- construction ------------------------------------------------------------


def from_odomutant(system: OdomutantSystem, depth: int) -> BratteliDiagram:
    """Level k >= 1 has one vertex per digit of level k-1; rank of m -> i is sigma^(k-1)_i(m)."""
    sp, fam = system.space, system.family
    if depth < 1:
        raise ConfigError("depth must be at least 1")
    levels = [1] + [sp.q(k) for k in range(depth)]
    edges = [[(0, i, 0) for i in range(sp.q(0))]]
    for k in range(1, depth):
        edges.append([(m, i, fam.sigma(k - 1, i, m)) for i in range(sp.q(k)) for m in range(sp.q(k - 1))])
    return BratteliDiagram(levels, edges)


def odometer_diagram(space, depth: int) -> BratteliDiagram:
    """One vertex per level and q_k parallel edges, ranked by digit."""
    levels = [1] * (depth + 1)
    return BratteliDiagram(levels, [[(0, 0, d) for d in range(space.q(k))] for k in range(depth)])


def odometer_path(space, p: Point, depth: int) -> PathPoint:
    """Digit-to-rank dictionary for the odometer diagram."""
    tail = p.tail
    return PathPoint(tuple((0, 0, d) for d in p.prefix[:depth]), tail)


def odometer_point(path: PathPoint) -> Point:
    return Point(tuple(e[2] for e in path.edges), path.tail)


def conjugation_psi(system: OdomutantSystem, p: Point, depth: int) -> PathPoint:
    """e_0 = root -> x_0 and e_k = x_{k-1} -> x_k with rank sigma^(k-1)_{x_k}(x_{k-1})."""
    sp, fam = system.space, system.family
    x = sp.digits(p, depth)
    edges = [(0, x[0], 0)] if depth else []
    for k in range(1, depth):
        edges.append((x[k - 1], x[k], fam.sigma(k - 1, x[k], x[k - 1])))
    return PathPoint(tuple(edges), p.tail)


@dataclass
class IntertwiningReport:
    depth: int
    samples: int
    checked: int
    excluded: int
    failures: list[dict]

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_json(self) -> dict:
        return {"depth": self.depth, "samples": self.samples, "checked": self.checked,
                "excluded_undetermined": self.excluded, "failures": self.failures, "ok": self.ok}


def check_intertwining(system: OdomutantSystem, depth: int, samples: int, seed, budget: int = 64) -> IntertwiningReport:
    """Psi(T p) against the Vershik successor of Psi(p) on seeded depth-length prefixes.

    Prefixes whose path is maximal up to the diagram depth have no
    determined successor there and are excluded.
    """
    sp = system.space
    diagram = from_odomutant(system, depth)
    rng = random.Random(f"{seed}:intertwine")
    failures, excluded, checked = [], 0, 0
    for _ in range(samples):
        p = sp.random_point(rng, depth)
        path = conjugation_psi(system, p, depth)
        try:
            succ = vershik_apply(diagram, path)
            tp, p = with_extension(sp, lambda z: apply_T(system, z), p, rng, budget)
        except (Undetermined, DomainError):
            excluded += 1
            continue
        checked += 1
        image = conjugation_psi(system, tp, depth)
        if materialize(diagram, image) != materialize(diagram, succ):
            failures.append({"point": p.to_json(), "psi_of_T": image.to_json(), "vershik": succ.to_json()})
    return IntertwiningReport(depth, samples, checked, excluded, failures)


def path_to_point(path: PathPoint) -> Point:
    """Inverse of the encoding above: the digits are the range vertices."""
    return Point(tuple(e[1] for e in path.edges), path.tail)


def incidence_matrices(diagram: BratteliDiagram, up_to: int | None = None) -> list[list[list[int]]]:
    """M_k[i][j] = number of edges of E_k from vertex j of level k to vertex i of level k+1."""
    top = diagram.depth if up_to is None else min(up_to, diagram.depth)
    out = []
    for k in range(top):
        M = [[0] * diagram.levels[k] for _ in range(diagram.levels[k + 1])]
        for s, r, _ in diagram.edges[k]:
            M[r][s] += 1
        out.append(M)
    return out


def matmul(A, B):
    return [[sum(A[i][t] * B[t][j] for t in range(len(B))) for j in range(len(B[0]))] for i in range(len(A))]


# -- multiplicities ------------------------------------------------------------


def multiply_edges(diagram: BratteliDiagram, n: Sequence[int]) -> BratteliDiagram:
    """Replace each edge of E_k (k >= 1) by n[k] parallel copies; copy c of rank r gets rank r*n[k] + c."""
    edges = [list(diagram.edges[0])]
    for k in range(1, diagram.depth):
        edges.append([(s, r, rank * n[k] + c) for s, r, rank in diagram.edges[k] for c in range(n[k])])
    return BratteliDiagram(diagram.levels, edges)


def _parallel_index(diagram: BratteliDiagram, k: int) -> dict[tuple[int, int], int]:
    """(range, rank) -> position of the edge among the parallel edges with the same endpoints, by rank."""
    order: dict[tuple[int, int], list[int]] = {}
    for s, r, rank in diagram.edges[k]:
        order.setdefault((s, r), []).append(rank)
    out = {}
    for (s, r), ranks in order.items():
        for m, rank in enumerate(sorted(ranks)):
            out[(r, rank)] = m
    return out


@dataclass
class SplitResult:
    diagram: BratteliDiagram
    multiplicities: tuple[int, ...]
    source: BratteliDiagram

    def _index(self, k: int) -> dict:
        return _parallel_index(self.source, k)

    def path_forward(self, path: PathPoint) -> PathPoint:
        """A length-L path of the source becomes a length-(L-1) path of the split diagram."""
        e = path.edges
        n = self.multiplicities
        if len(e) < 2:
            return PathPoint((), path.tail)
        copies = [None] + [self._index(k)[(e[k][1], e[k][2])] for k in range(1, len(e))]
        out = [(0, e[0][1] * n[1] + copies[1], e[0][2])]
        for k in range(1, len(e) - 1):
            s, r, rank = e[k]
            out.append((s * n[k] + copies[k], r * n[k + 1] + copies[k + 1], rank))
        return PathPoint(tuple(out), path.tail)

    def path_backward(self, path: PathPoint) -> PathPoint:
        """Recover the first edges of the source path; edges are fixed by range and rank."""
        n = self.multiplicities
        out = []
        for k, (_, r, rank) in enumerate(path.edges):
            out.append(self.source.edge(k, r // n[k + 1], rank))
        return PathPoint(tuple(out), path.tail)


def split_multiplicities(diagram: BratteliDiagram, n: Sequence[int]) -> SplitResult:
    """Split each vertex of level k into n[k] copies so every edge becomes simple.

    ``n[k]`` (k >= 1) must be the common number of parallel edges between
    every connected pair of vertices in E_k; n[0] is ignored. The split
    diagram has depth one less than the input.
    """
    n = tuple(int(v) for v in n)
    D = diagram.depth
    if len(n) < D:
        raise ConfigError(f"need multiplicities for levels 1..{D - 1}")
    if D < 2:
        raise ConfigError("splitting needs depth at least 2")
    for k in range(1, D):
        counts: dict[tuple[int, int], int] = {}
        for s, r, _ in diagram.edges[k]:
            counts[(s, r)] = counts.get((s, r), 0) + 1
        bad = {v for v in counts.values() if v != n[k]}
        if bad:
            raise ValidationError(f"E_{k} has parallel-edge counts {sorted(bad)}, declared {n[k]}")
    levels = [1] + [diagram.levels[k] * n[k] for k in range(1, D)]
    edges = [[(0, r * n[1] + m, rank) for _, r, rank in diagram.edges[0] for m in range(n[1])]]
    for k in range(1, D - 1):
        idx = _parallel_index(diagram, k)
        level = []
        for s, r, rank in diagram.edges[k]:
            m = idx[(r, rank)]
            for m2 in range(n[k + 1]):
                level.append((s * n[k] + m, r * n[k + 1] + m2, rank))
        edges.append(level)
    return SplitResult(BratteliDiagram(levels, edges), n, diagram)


# -- export ------------------------------------------------------------------


def to_json(diagram: BratteliDiagram) -> str:
    data = {"levels": list(diagram.levels),
            "edges": [[k, s, r, rank] for k, level in enumerate(diagram.edges) for s, r, rank in level]}
    return json.dumps(data, sort_keys=True)


def from_json(text: str) -> BratteliDiagram:
    data = json.loads(text)
    try:
        levels = data["levels"]
        edges = [[] for _ in range(len(levels) - 1)]
        for k, s, r, rank in data["edges"]:
            edges[k].append((s, r, rank))
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ConfigError(f"malformed diagram JSON: {exc}") from None
    return BratteliDiagram(levels, edges)


def to_dot(diagram: BratteliDiagram, name: str = "bratteli") -> str:
    lines = [f"digraph {name} {{", "  rankdir=TB;", "  node [shape=circle, label=\"\"];"]
    for k, count in enumerate(diagram.levels):
        nodes = " ".join(f"v{k}_{i};" for i in range(count))
        lines.append(f"  {{ rank=same; {nodes} }}")
    for k, level in enumerate(diagram.edges):
        for s, r, rank in sorted(level, key=lambda e: (e[0], e[1], e[2])):
            lines.append(f"  v{k}_{s} -> v{k + 1}_{r} [label=\"{rank}\"];")
    lines.append("}")
    return "\n".join(lines) + "\n"
