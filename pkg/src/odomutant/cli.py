"""Batch front end.

A run is one JSON config. It is schema-checked first, then the requested
command runs and its report is written as JSON, with CSV tables and DOT
diagrams next to it when the config asks for them. Flags only override
config fields.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import sys
import traceback
from fractions import Fraction
from pathlib import Path

import jsonschema
import mpmath

from . import __version__
from . import bratteli as B
from . import cocycles as C
from . import measure as M
from . import sequences as Q
from . import spectrum as SP
from . import words as W
from .arith import DEFAULT_PREC, mp_str
from .dynamics import OdomutantSystem, apply_T, transfer_exponent
from .errors import ConfigError, InternalError, OdomutantError, PreconditionError, ResourceError
from .families import FeldmanParams, PermutationFamily, family_from_config, feldman_family, validate_family
from .space import BaseSequence, Point, Tail, make_space

COMMANDS = ("orbit", "cocycles", "series", "words", "entropy", "fmetric", "lb0", "builder", "bratteli", "spectrum",
            "validate")

_INT = {"type": "integer"}
_POS = {"type": "integer", "minimum": 1}
_NAT = {"type": "integer", "minimum": 0}
_RATIONAL = {"anyOf": [{"type": "number"}, {"type": "string", "pattern": r"^-?\d+(\.\d+)?(/\d+)?$"}]}
_SEED = {"anyOf": [{"type": "integer"}, {"type": "string", "minLength": 1}]}
_POINT = {
    "type": "object",
    "properties": {"prefix": {"type": "array", "items": _NAT}, "tail": {"enum": [t.value for t in Tail]}},
    "required": ["prefix"],
    "additionalProperties": False,
}
_PHI = {
    "anyOf": [
        {"enum": ["linear", "log"]},
        {
            "type": "object",
            "properties": {"kind": {"enum": ["power", "log_quotient", "linear", "log"]}, "p": _RATIONAL, "m": _NAT},
            "required": ["kind"],
            "additionalProperties": False,
        },
    ]
}
_KIND = {"enum": ["P", "P~"]}

SPACE_SCHEMA = {
    "oneOf": [
        {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
        {
            "type": "object",
            "properties": {"kind": {"const": "explicit"}, "values": {"type": "array", "items": {"type": "integer", "minimum": 2},
                                                                      "minItems": 1},
                           "periodic": {"type": "boolean"}},
            "required": ["kind", "values"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"kind": {"const": "rule"},
                           "rule": {"enum": ["constant", "double_exponential", "affine", "feldman_toy"]},
                           "value": {"type": "integer", "minimum": 2}, "slope": _NAT, "offset": _INT,
                           "qt": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
                           "levels": _POS},
            "required": ["kind", "rule"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"kind": {"const": "factored"}, "rule": {"const": "feldman"}, "offset": _NAT, "levels": _POS},
            "required": ["kind"],
            "additionalProperties": False,
        },
    ]
}

FAMILY_SCHEMA = {
    "type": "object",
    "properties": {
        "preset": {"enum": ["identity", "cyclic", "dyadic_swap", "random_fixed_endpoint", "entropy", "table", "feldman"]},
        "seed": _SEED,
        "distinct": {"type": "boolean"},
        "tables": {"type": "object", "patternProperties": {r"^\d+$": {"type": "array", "items": {"type": "array", "items": _NAT}}},
                   "additionalProperties": False},
        "table_file": {"type": "string"},
        "periodic": {"type": "boolean"},
        "fixes_zero": {"type": "boolean"},
        "fixes_max": {"type": "boolean"},
        "qt": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
    },
    "required": ["preset"],
    "additionalProperties": False,
}

OUTPUT_SCHEMA = {
    "type": "object",
    "properties": {k: {"type": "string", "minLength": 1} for k in ("json", "csv", "csv_second", "dot")},
    "additionalProperties": False,
}


def _params(props: dict, required: tuple = ()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


PARAM_SCHEMAS = {
    "orbit": _params({"samples": _NAT, "prefix_start": _POS, "prefix_budget": _POS, "point": _POINT, "steps": _NAT,
                      "transfer": _params({"x": _POINT, "y": _POINT, "M": _NAT}, ("x", "y", "M"))}),
    "cocycles": _params({"samples": _POS, "prefix_start": _POS, "prefix_budget": _POS, "phi": _PHI}),
    "series": _params({"condition": {"enum": ["C1", "C2", "fixed_points"]}, "phi": _PHI, "n_max": _NAT}, ("n_max",)),
    "words": _params({"kind": _KIND, "level": _NAT, "n": _NAT, "method": {"enum": ["brute", "recursion"]},
                      "letter_budget": _POS, "word": _params({"n": _NAT, "x": _NAT}, ("n", "x"))}, ("level", "n")),
    "entropy": _params({"level": _NAT, "n": {"type": "array", "items": _NAT, "minItems": 1},
                        "method": {"enum": ["brute", "recursion"]}, "letter_budget": _POS, "kappa": {"type": "boolean"}},
                       ("n",)),
    "fmetric": _params({"words": {"type": "array", "minItems": 2,
                                  "items": {"type": "array", "items": {"type": ["integer", "string"]}}},
                        "band": _NAT, "d_metric": {"type": "boolean"}}, ("words",)),
    "lb0": _params({"kind": _KIND, "level": _NAT, "N": _POS, "eps": _RATIONAL, "seeds": _POS, "pair_budget": _POS,
                    "letter_budget": _POS}, ("level", "eps")),
    "builder": _params({"construction": {"enum": ["choiceqn", "infinite_entropy", "powerK", "summable", "exponents"]},
                        "alpha": _RATIONAL, "p_star": {"type": "integer", "minimum": 2},
                        "primes": {"type": "array", "items": {"type": "integer", "minimum": 2}},
                        "depth": _NAT, "K": _POS, "selection": {"enum": ["midpoint", "proof"]},
                        "p": _RATIONAL, "qt": _POS, "c": _POS, "m": _NAT, "beta": _RATIONAL,
                        "n_range": {"type": "array", "items": _NAT, "minItems": 2, "maxItems": 2},
                        "offset": _NAT, "use_choiceqn": {"type": "boolean"}}, ("construction",)),
    "bratteli": _params({"depth": _POS, "samples": _NAT, "odometer_check": {"type": "boolean"},
                         "incidence": {"type": "boolean"},
                         "transform": _params({"kind": {"enum": ["multiply", "split"]},
                                               "n": {"type": "array", "items": _POS, "minItems": 1}}, ("kind", "n"))}),
    "spectrum": _params({"n_max": _NAT, "samples": _NAT, "sweep_cases": _NAT,
                         "eigenvalue": _params({"k": _NAT, "n": _NAT}, ("k", "n")),
                         "complex": _params({"tau": _RATIONAL, "eps": _RATIONAL,
                                             "interval": {"type": "array", "items": _INT, "minItems": 2, "maxItems": 2}},
                                            ("tau", "eps", "interval")),
                         "fixed_points": _NAT}),
    "validate": _params({"flags": {"type": "array", "items": {"enum": ["fixes_zero", "fixes_max", "distinct"]}},
                         "n_max": _NAT, "probe": _params({"level": _NAT, "L": _NAT, "method": {"enum": ["enumerate", "levels"]},
                                           "samples": _POS}, ("level",))}),
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "space": SPACE_SCHEMA,
        "family": FAMILY_SCHEMA,
        "params": {"type": "object"},
        "output": OUTPUT_SCHEMA,
        "precision": {"type": "integer", "minimum": 53, "maximum": 1 << 16},
        "seed": _SEED,
        "threads": _POS,
    },
    "required": ["command"],
    "additionalProperties": False,
}

# commands that draw random samples, keyed to the parameter that turns sampling on
_SAMPLING = {"orbit": ("samples", 1000), "cocycles": ("samples", 1000), "bratteli": ("samples", 0),
             "spectrum": ("samples", 1000), "validate": ("probe", None)}


def _schema_check(instance, schema, where: str) -> None:
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(instance), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        path = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {path}: {e.message}")


def validate_config(config: dict) -> dict:
    """Schema-check a config, including the parameters of its command. Returns it unchanged."""
    _schema_check(config, CONFIG_SCHEMA, "config")
    _schema_check(config.get("params", {}), PARAM_SCHEMAS[config["command"]], f"params of {config['command']}")
    cmd = config["command"]
    if cmd in _SAMPLING:
        key, default = _SAMPLING[cmd]
        wants = config.get("params", {}).get(key, default)
        if cmd == "spectrum":
            wants = wants or config.get("params", {}).get("sweep_cases", 0)
        if cmd == "validate":
            wants = config.get("params", {}).get("probe", {}).get("method") == "levels"
        if wants and "seed" not in config:
            raise ConfigError(f"command {cmd!r} draws samples and needs an explicit seed")
    return config


def config_hash(config: dict) -> str:
    """sha256 of the canonical JSON of everything that affects results (output paths and threads excluded)."""
    core = {k: v for k, v in config.items() if k not in ("output", "threads")}
    text = json.dumps(core, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _frac(v) -> Fraction:
    return Fraction(str(v))


def _point(spec: dict) -> Point:
    return Point(tuple(spec["prefix"]), Tail(spec.get("tail", "unspecified")))


# -- building the system -------------------------------------------------------


class Context:
    def __init__(self, config: dict, base: Path):
        self.config = config
        self.params = config.get("params", {})
        self.seed = config.get("seed")
        self.base = base
        self._space = None
        self._family = None

    def param(self, key, default=None):
        return self.params.get(key, default)

    @property
    def precision(self) -> int:
        default = Q.CHECK_PREC if self.config["command"] == "builder" else DEFAULT_PREC
        return self.config.get("precision", default)

    @property
    def space(self) -> BaseSequence:
        if self._space is None:
            fam = self.config.get("family", {})
            if fam.get("preset") == "feldman":
                if "space" in self.config:
                    raise ConfigError("the feldman preset builds its own space; leave 'space' out")
                self._family = feldman_family(FeldmanParams(tuple(fam.get("qt", [2]))))
                self._space = self._family.space
            elif "space" not in self.config:
                raise ConfigError(f"command {self.config['command']!r} needs a 'space'")
            else:
                self._space = make_space(self.config["space"])
        return self._space

    @property
    def family(self) -> PermutationFamily:
        if self._family is None:
            sp = self.space
            if self._family is None:
                spec = dict(self.config.get("family", {"preset": "identity"}))
                if spec.get("preset") == "table":
                    spec["tables"] = self._tables(spec)
                self._family = family_from_config(sp, spec)
        return self._family

    def _tables(self, spec: dict) -> dict:
        if "tables" in spec and "table_file" in spec:
            raise ConfigError("give either 'tables' or 'table_file', not both")
        if "table_file" in spec:
            path = self.base / spec["table_file"]
            try:
                data = json.loads(path.read_text(encoding="utf-8"))
            except OSError as exc:
                raise ConfigError(f"cannot read table file {path}: {exc.strerror}") from None
            except json.JSONDecodeError as exc:
                raise ConfigError(f"table file {path} is not JSON: {exc}") from None
            raw = data.get("tables", data) if isinstance(data, dict) else None
        else:
            raw = spec.get("tables")
        if not isinstance(raw, dict):
            raise ConfigError("preset 'table' needs a mapping from level to a list of permutations")
        try:
            return {int(k): [list(map(int, t)) for t in v] for k, v in raw.items()}
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed permutation tables: {exc}") from None

    @property
    def system(self) -> OdomutantSystem:
        return OdomutantSystem.of(self.family)


# -- commands -------------------------------------------------------------------
# Each returns (result, artifacts); artifacts maps an output key to file text.


def _csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def _series_csv(table: C.SeriesTable) -> str:
    return _csv(["n", "term", "partial_sum"], table.csv_rows())


def cmd_orbit(ctx: Context):
    system = ctx.system
    out: dict = {}
    samples = ctx.param("samples", 1000)
    if samples:
        rep = C.verify_orbit_equivalence(system, samples, ctx.seed, ctx.param("prefix_start", 4),
                                         ctx.param("prefix_budget", 64))
        if not rep.ok:
            raise InternalError(f"{len(rep.failures)} samples violated an orbit-equivalence identity")
        out["verification"] = rep.to_json()
    if "point" in ctx.params:
        p = _point(ctx.params["point"])
        orbit = [p.to_json()]
        stopped = None
        for _ in range(ctx.param("steps", 0)):
            try:
                p = apply_T(system, p)
            except PreconditionError as exc:
                stopped = str(exc)
                break
            orbit.append(p.to_json())
        out["orbit"] = orbit
        out["partial"] = stopped is not None
        if stopped is not None:
            out["stopped"] = stopped
    if "transfer" in ctx.params:
        t = ctx.params["transfer"]
        out["transfer_exponent"] = transfer_exponent(system, _point(t["x"]), _point(t["y"]), t["M"])
    return out, {}


def cmd_cocycles(ctx: Context):
    system = ctx.system
    phi = C.PhiMap.from_config(ctx.params["phi"]) if "phi" in ctx.params else None
    samples = ctx.param("samples", 1000)
    budget = ctx.param("prefix_budget", 64)
    start = ctx.param("prefix_start", 4)
    check = C.verify_orbit_equivalence(system, samples, ctx.seed, start, budget)
    if not check.ok:
        raise InternalError(f"{len(check.failures)} samples violated an orbit-equivalence identity")
    rep = C.cocycle_stats(system, samples, budget, ctx.seed, phi, start, ctx.precision)
    hist = _csv(["value", "count"], sorted(rep.histogram.items()))
    return {"verification": check.to_json(), "statistics": rep.to_json()}, {"csv": hist}


def cmd_series(ctx: Context):
    cond = ctx.param("condition", "C1")
    n_max = ctx.params["n_max"]
    if cond == "fixed_points":
        res = SP.fixed_point_series(ctx.family, n_max)
        rows = [(r["n"], r["density"], r["partial_sum"]) for r in res.rows]
        return {"condition": cond, **res.to_json()}, {"csv": _csv(["n", "term", "partial_sum"], rows)}
    if "phi" not in ctx.params:
        raise ConfigError(f"condition {cond} needs a gauge 'phi'")
    phi = C.PhiMap.from_config(ctx.params["phi"])
    if cond == "C1":
        table = C.phi_series_C1(ctx.space, phi, n_max, ctx.precision)
        return {"condition": cond, "phi": phi.describe(), **table.to_json()}, {"csv": _series_csv(table)}
    first, second, inner = C.phi_series_C2(ctx.system, phi, n_max, ctx.precision)
    inner_json = {str(n): {k: {str(d): c for d, c in h.items()} for k, h in v.items()} for n, v in inner.items()}
    return ({"condition": cond, "phi": phi.describe(), "first": first.to_json(), "second": second.to_json(),
             "displacements": inner_json},
            {"csv": _series_csv(first), "csv_second": _series_csv(second)})


def cmd_words(ctx: Context):
    system = ctx.system
    kind = ctx.param("kind", "P")
    level, n = ctx.params["level"], ctx.params["n"]
    budget = ctx.param("letter_budget", W.DEFAULT_LETTER_BUDGET)
    res = W.count_words(system, kind, level, n, ctx.param("method", "brute"), budget, ctx.precision)
    out = {"kind": kind, **res.to_json()}
    if "word" in ctx.params:
        wn, wx = ctx.params["word"]["n"], ctx.params["word"]["x"]
        word = W.tower_word(system, kind, level, wn, wx, budget)
        out["tower_word"] = {"n": wn, "x": wx, "letters": list(word.letters), "atoms": word.atoms}
    return out, {}


def cmd_entropy(ctx: Context):
    system = ctx.system
    level = ctx.param("level", 1)
    rows = W.entropy_estimate(system, level, ctx.params["n"], ctx.param("method", "brute"),
                              ctx.param("letter_budget", W.DEFAULT_LETTER_BUDGET), ctx.precision)
    out = {"level": level, "rows": [r.to_json() for r in rows]}
    if ctx.param("kappa", False):
        out["kappa_lower_bounds"] = {str(n): str(W.kappa_lower_bound(system, level, n)) for n in ctx.params["n"]}
    table = _csv(["n", "count", "log_count_over_h", "log_q_over_h", "upper"],
                 [(r["n"], r["count"], r["log_count_over_h"], r["log_q_over_h"], r["upper"]) for r in out["rows"]])
    return out, {"csv": table}


def cmd_fmetric(ctx: Context):
    words = [tuple(w) for w in ctx.params["words"]]
    band = ctx.param("band")
    out: dict = {"words": len(words)}
    if len(words) == 2:
        out["f"] = str(W.f_metric(words[0], words[1], band))
    out["f_matrix"] = [[str(v) for v in row] for row in W.f_matrix(words)]
    if ctx.param("d_metric", False):
        if len({len(w) for w in words}) != 1:
            raise ConfigError("the d metric needs words of equal length")
        out["d_matrix"] = [[str(W.d_metric_normalized(a, b)) for b in words] for a in words]
    return out, {}


def cmd_lb0(ctx: Context):
    system = ctx.system
    kind = ctx.param("kind", "P")
    level = ctx.params["level"]
    eps = _frac(ctx.params["eps"])
    if not 0 < eps < 1:
        raise ConfigError("eps must lie in (0, 1)")
    hk = system.space.h(level)
    N = ctx.param("N", math.ceil(2 * hk / eps))
    rep = W.lb0_report(system, kind, level, N, eps, ctx.param("seeds", 3),
                       ctx.param("letter_budget", W.DEFAULT_LETTER_BUDGET), ctx.param("pair_budget", 1 << 26))
    out = rep.to_json()
    bound = Fraction(2 * hk, N)
    out["pair_bound"] = str(bound)
    out["pair_bound_applies"] = N * eps >= 2 * hk
    out["within_pair_bound"] = None if rep.max_pairwise is None else rep.max_pairwise <= bound
    return out, {}


def cmd_builder(ctx: Context):
    what = ctx.params["construction"]
    prec = ctx.precision
    need = {"choiceqn": ("alpha", "p_star", "depth"), "infinite_entropy": ("p_star", "primes", "depth"),
            "powerK": ("p", "qt", "c"), "summable": ("m", "beta", "n_range"), "exponents": ("n_range",)}[what]
    missing = [k for k in need if k not in ctx.params]
    if missing:
        raise ConfigError(f"construction {what!r} needs {', '.join(missing)}")

    def choice():
        spec = Q.SupernaturalSpec(ctx.params["p_star"], tuple(ctx.param("primes", [])))
        return Q.build_choiceqn(_frac(ctx.params["alpha"]), spec, ctx.params["depth"], ctx.param("K"), prec,
                                ctx.param("selection", "midpoint"))

    if what == "choiceqn":
        res = choice()
        return {"construction": what, **res.to_json()}, {}
    if what == "infinite_entropy":
        res = Q.build_infinite_entropy(ctx.params["p_star"], ctx.params["primes"], ctx.params["depth"], prec)
        return {"construction": what, **res.to_json()}, {}
    if what == "powerK":
        p = _frac(ctx.params["p"])
        if p.denominator != 1:
            raise ConfigError("p must be an integer here")
        res = Q.check_powerK(int(p), ctx.params["qt"], ctx.params["c"], prec)
        return {"construction": what, **res.to_json()}, {}
    lo, hi = ctx.params["n_range"]
    if lo > hi:
        raise ConfigError("n_range must be increasing")
    if what == "summable":
        space = choice().space() if ctx.param("use_choiceqn", False) else ctx.space
        res = Q.check_summable(space, ctx.params["m"], _frac(ctx.params["beta"]), range(lo, hi + 1), prec)
        return {"construction": what, **res.to_json()}, {}
    offset = ctx.param("offset", 10)
    p = _frac(ctx.param("p", "1/2"))
    signs = Q.exponent_sign_table(p, range(max(lo, 1), hi + 1), offset)
    rows = [(n, Q.feldman_exponents(n, offset), signs[n]) for n in sorted(signs)]
    ratios = Q.exponent_ratio_table(range(lo, hi + 1), offset, prec)
    return ({"construction": what, "p": str(p), "offset": offset, "signs": {str(n): s for n, s in signs.items()},
             "ratios": ratios},
            {"csv": _csv(["n", "S_n", "sign"], rows)})


def cmd_bratteli(ctx: Context):
    system = ctx.system
    depth = ctx.param("depth", 6)
    diagram = B.from_odomutant(system, depth)
    out: dict = {"depth": depth, "levels": list(diagram.levels), "properly_ordered": B.is_properly_ordered(diagram)}
    if ctx.param("incidence", False):
        out["incidence_matrices"] = B.incidence_matrices(diagram)
    samples = ctx.param("samples", 0)
    if samples:
        rep = B.check_intertwining(system, depth, samples, ctx.seed)
        if not rep.ok:
            raise InternalError(f"{len(rep.failures)} samples break the intertwining of T and the Vershik map")
        out["intertwining"] = rep.to_json()
    if ctx.param("odometer_check", False):
        out["odometer_vershik"] = _odometer_vershik(system.space, depth)
    if out["properly_ordered"]:
        succ = B.vershik_apply(diagram, B.max_path(diagram))
        out["max_path_successor_is_min"] = B.same_path(diagram, succ, B.min_path(diagram))
    shown = diagram
    if "transform" in ctx.params:
        t = ctx.params["transform"]
        if t["kind"] == "multiply":
            shown = B.multiply_edges(diagram, t["n"])
        else:
            shown = B.split_multiplicities(diagram, t["n"]).diagram
        out["transform"] = {"kind": t["kind"], "n": t["n"], "levels": list(shown.levels)}
    out["diagram"] = json.loads(B.to_json(shown))
    return out, {"dot": B.to_dot(shown)}


def _odometer_vershik(space: BaseSequence, depth: int) -> dict:
    """Vershik on the one-vertex diagram against S on every depth-length prefix, under digit = rank."""
    from .dynamics import apply_S

    diagram = B.odometer_diagram(space, depth)
    checked = mismatched = 0
    total = space.h(depth)
    if total > 1 << 16:
        raise ResourceError(f"the odometer check at depth {depth} visits {total} prefixes")
    for j in range(total - 1):
        p = Point(tuple(space.to_digits(j, depth)), Tail.UNSPECIFIED)
        via_path = B.odometer_point(B.vershik_apply(diagram, B.odometer_path(space, p, depth)))
        if tuple(via_path.prefix[:depth]) != tuple(space.digits(apply_S(space, p), depth)):
            mismatched += 1
        checked += 1
    return {"checked": checked, "mismatches": mismatched}


def cmd_spectrum(ctx: Context):
    out: dict = {}
    n_max = ctx.param("n_max", 4)
    samples = ctx.param("samples", 1000)
    if samples:
        sp = ctx.space
        out["eigen_relation"] = [SP.check_eigen_relation(sp, n, samples, ctx.seed).to_json() for n in range(n_max + 1)]
        system = ctx.system
        out["pullback"] = [SP.check_pullback(system, n, samples, ctx.seed).to_json() for n in range(n_max + 1)]
        bad = sum(len(r["failures"]) for r in out["eigen_relation"] + out["pullback"])
        if bad:
            raise InternalError(f"{bad} samples break an eigenfunction relation")
    if "eigenvalue" in ctx.params:
        ev = SP.Eigenvalue.of(ctx.space, ctx.params["eigenvalue"]["k"], ctx.params["eigenvalue"]["n"])
        out["eigenvalue"] = {"k": ev.k, "n": ev.n, "rotation": str(ev.rotation), "torsion": ev.torsion(ctx.space)}
    if "complex" in ctx.params:
        c = ctx.params["complex"]
        out["complex_check"] = SP.lemma_complex_check(_frac(c["tau"]), _frac(c["eps"]), tuple(c["interval"]),
                                                      ctx.precision).to_json()
    cases = ctx.param("sweep_cases", 0)
    if cases:
        sweep = SP.lemma_complex_sweep(cases, ctx.seed, prec=ctx.precision)
        if sweep.violations:
            raise InternalError(f"{len(sweep.violations)} sweep cases violate the counting bound")
        out["complex_sweep"] = sweep.to_json()
    if "fixed_points" in ctx.params:
        out["fixed_points"] = SP.fixed_point_series(ctx.family, ctx.params["fixed_points"]).to_json()
    return out, {}


def cmd_validate(ctx: Context):
    fam = ctx.family
    rep = validate_family(ctx.space, fam, ctx.param("flags", []), ctx.param("n_max"))
    out = {"family": fam.name, "fixes_zero": fam.fixes_zero, "fixes_max": fam.fixes_max,
           "multiplicity": fam.multiplicity is not None, "extends_to_homeomorphism": fam.fixes_zero and fam.fixes_max,
           **rep.to_json()}
    if "probe" in ctx.params:
        pr = ctx.params["probe"]
        if pr.get("method", "enumerate") == "levels":
            if "L" in pr:
                raise ConfigError("the carry-level probe always uses L = level")
            res = M.measure_probe_by_levels(ctx.system, pr["level"], pr.get("samples", 1000), ctx.seed)
        else:
            res = M.measure_probe(ctx.system, pr["level"], pr.get("L"))
        if not res.ok:
            raise InternalError("the measure probe found a cylinder whose pullback has the wrong measure")
        out["measure_probe"] = res.to_json()
    return out, {}


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


# -- running and emitting -----------------------------------------------------


def run(config: dict, base: Path | None = None) -> tuple[dict, dict[str, str]]:
    """Validate and execute a config. Returns the report and the extra artifacts (key -> text)."""
    config = validate_config(copy.deepcopy(config))
    ctx = Context(config, base or Path.cwd())
    with mpmath.workprec(ctx.precision):
        result, artifacts = HANDLERS[config["command"]](ctx)
    report = {
        "tool": "odomutant",
        "version": __version__,
        "command": config["command"],
        "config_hash": config_hash(config),
        "seed": config.get("seed"),
        "precision_bits": ctx.precision,
        "threads": {"requested": config.get("threads", 1), "used": 1},
        "partial": bool(result.get("partial", False)) if isinstance(result, dict) else False,
        "result": result,
    }
    return report, artifacts


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, ensure_ascii=False, default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, mpmath.mpf):
        return mp_str(obj)
    if isinstance(obj, (set, frozenset, tuple)):
        return list(obj)
    if hasattr(obj, "value"):
        return obj.value
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def emit(report: dict, artifacts: dict[str, str], outputs: dict, out_dir: Path | None = None, stdout=None) -> list[Path]:
    """Write the JSON report and any requested artifacts. Without a json path the report goes to stdout."""
    out_dir = out_dir or Path.cwd()
    written = []
    text = dumps(report)
    if "json" in outputs:
        written.append(_write(out_dir / outputs["json"], text))
    else:
        (stdout or sys.stdout).write(text)
    for key, body in artifacts.items():
        if key in outputs:
            written.append(_write(out_dir / outputs[key], body))
    return written


def _write(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror}") from None
    return path


class OutputError(ConfigError):
    pass


def _set_override(config: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key.path=value")
    key, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = config
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key!r} descends into a non-object")
    node[parts[-1]] = value


def load_config(path: str) -> dict:
    try:
        text = sys.stdin.read() if path == "-" else Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("the config must be a JSON object")
    return data


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="odomutant", description="Exact experiments on odometers and their distortions.")
    sub = ap.add_subparsers(dest="action", required=True)
    r = sub.add_parser("run", help="run a JSON config")
    r.add_argument("config", help="path to the config, or - for stdin")
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field, dotted path, JSON value")
    r.add_argument("--seed", help="override the seed")
    r.add_argument("--precision", type=int, help="override the precision in bits")
    r.add_argument("--threads", type=int, help="cap on worker threads (work is currently sequential)")
    r.add_argument("--out-dir", help="directory that output paths are relative to")
    sub.add_parser("schema", help="print the config schema")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.action == "schema":
        sys.stdout.write(json.dumps({"config": CONFIG_SCHEMA, "params": PARAM_SCHEMAS}, indent=2) + "\n")
        return 0
    try:
        config = load_config(args.config)
        for a in args.set:
            _set_override(config, a)
        if args.seed is not None:
            config["seed"] = int(args.seed) if args.seed.lstrip("-").isdigit() else args.seed
        if args.precision is not None:
            config["precision"] = args.precision
        if args.threads is not None:
            config["threads"] = args.threads
        base = Path.cwd() if args.config == "-" else Path(args.config).resolve().parent
        report, artifacts = run(config, base)
        emit(report, artifacts, config.get("output", {}), Path(args.out_dir) if args.out_dir else None)
    except OdomutantError as exc:
        sys.stderr.write(f"odomutant: {type(exc).__name__}: {exc}\n")
        return exc.exit_code
    except RecursionError:
        sys.stderr.write("odomutant: ResourceError: recursion depth exhausted\n")
        return ResourceError.exit_code
    except MemoryError:
        sys.stderr.write("odomutant: ResourceError: out of memory\n")
        return ResourceError.exit_code
    except Exception:  # anything else is a bug
        traceback.print_exc(file=sys.stderr)
        return InternalError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
