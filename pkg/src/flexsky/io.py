"""Flat-file formats: relation CSV files, query documents and result documents."""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from .engine import SETS, EngineConfig
from .errors import DataError, FlexskyError, QuerySpecError
from .scoring import (
    AttributeKind,
    AttributeSchema,
    LinearConstraint,
    Relation,
    ScoringFamily,
    Sense,
    Transform,
    TransformKind,
    WeightPolytope,
)

DEFAULT_RATE_RANGE = (1.0, 50.0)


# -- relations ---------------------------------------------------------------


def load_relation(path: str | Path, schema: AttributeSchema | None = None) -> Relation:
    """Read a comma-separated relation with a header row and an ``id`` column.

    With a ``schema`` the header must name exactly its attributes (in any
    order) and every value is checked against its attribute's kind.  Without
    one, columns whose values all lie in [0, 1] are taken as normalized and
    the rest as rates.
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read relation {path}: {exc.strerror or exc}") from None
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: not UTF-8 text ({exc.reason})") from None
    if not rows:
        raise DataError(f"{path}: empty file, expected a header row")
    header = [h.strip() for h in rows[0]]
    if "id" not in header:
        raise DataError(f"{path}: header has no 'id' column")
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names in header")
    id_col = header.index("id")
    attrs = [h for h in header if h != "id"]
    if schema is not None:
        missing = [n for n in schema.names if n not in attrs]
        extra = [n for n in attrs if n not in schema.names]
        if missing or extra:
            parts = []
            if missing:
                parts.append(f"missing {', '.join(missing)}")
            if extra:
                parts.append(f"unexpected {', '.join(extra)}")
            raise DataError(f"{path}: columns do not match the query schema ({'; '.join(parts)})")
        names = list(schema.names)
    else:
        names = attrs
    cols = [header.index(n) for n in names]

    ids, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, found {len(row)}")
        tid = row[id_col].strip()
        if not tid:
            raise DataError(f"{path}:{lineno}: empty id")
        parsed = []
        for name, c in zip(names, cols):
            cell = row[c].strip()
            try:
                v = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}:{lineno}: tuple {tid}, attribute {name}: {cell!r} is not a number"
                ) from None
            if not math.isfinite(v):
                raise DataError(f"{path}:{lineno}: tuple {tid}, attribute {name}: value {cell} is not finite")
            if schema is not None:
                try:
                    schema.check_value(name, v)
                except DataError:
                    raise DataError(
                        f"{path}:{lineno}: tuple {tid}, attribute {name}: value {cell} outside the "
                        f"{schema.kind_of(name).value} domain"
                    ) from None
            parsed.append(v)
        ids.append(tid)
        values.append(parsed)
    if not ids:
        raise DataError(f"{path}: relation has no tuples")
    if len(set(ids)) != len(ids):
        seen, dupes = set(), []
        for t in ids:
            if t in seen:
                dupes.append(t)
            seen.add(t)
        raise DataError(f"{path}: duplicate tuple ids {', '.join(sorted(set(dupes)))}")
    arr = np.array(values, dtype=float).reshape(len(ids), len(names))
    if schema is None:
        kinds = [
            AttributeKind.NORMALIZED if np.all((arr[:, j] >= 0) & (arr[:, j] <= 1)) else AttributeKind.RATE
            for j in range(len(names))
        ]
        schema = AttributeSchema(tuple(names), tuple(kinds))
    try:
        return Relation(schema, tuple(ids), arr)
    except FlexskyError as exc:
        raise DataError(f"{path}: {exc}") from None


def format_real(value: float) -> str:
    """Shortest text that reads back as the same double (at most 17 digits)."""
    return repr(float(value))


def write_relation(path: str | Path, relation: Relation) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", *relation.schema.names])
        for tid, row in zip(relation.ids, relation.values):
            writer.writerow([tid, *(format_real(v) for v in row)])


def gen_dataset(
    n: int,
    schema: AttributeSchema,
    seed: int,
    rate_range: tuple[float, float] = DEFAULT_RATE_RANGE,
) -> Relation:
    """Synthetic relation: rates uniform on ``rate_range``, normalized values uniform on [0, 1]."""
    if n < 1:
        raise DataError(f"relation size must be at least 1, got {n}")
    lo, hi = rate_range
    if not (0 <= lo <= hi and math.isfinite(hi)):
        raise DataError(f"invalid rate range [{lo}, {hi}]")
    rng = np.random.default_rng(seed)
    values = np.empty((n, schema.arity))
    for j, kind in enumerate(schema.kinds):
        if kind is AttributeKind.RATE:
            values[:, j] = rng.uniform(lo, hi, size=n)
        else:
            values[:, j] = rng.uniform(0.0, 1.0, size=n)
    width = len(str(n))
    ids = tuple(f"t{i:0{width}d}" for i in range(1, n + 1))
    return Relation(schema, ids, values)


# -- query documents ---------------------------------------------------------


@dataclass(frozen=True)
class EngineOptions:
    clamp: bool = False
    tolerance: float = 1e-9
    band_multiplier: float = 2.0
    parallelism: int = 1
    oracle: bool = False


@dataclass(frozen=True)
class QuerySpec:
    schema: AttributeSchema
    transforms: tuple[Transform, ...]
    constraints: tuple[LinearConstraint, ...]
    outputs: tuple[str, ...] = SETS
    engine: EngineOptions = field(default_factory=EngineOptions)
    family: ScoringFamily = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        polytope = WeightPolytope(self.schema.arity, self.constraints)
        object.__setattr__(self, "family", ScoringFamily(self.schema, self.transforms, polytope))

    def engine_config(self, **overrides) -> EngineConfig:
        opts = {
            "tolerance": self.engine.tolerance,
            "use_clamp": self.engine.clamp,
            "band_multiplier": self.engine.band_multiplier,
            "parallelism": self.engine.parallelism,
        }
        opts.update({k: v for k, v in overrides.items() if v is not None})
        return EngineConfig(**opts)


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e-9`` (no decimal point) as a float, as JSON does."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)

_TOP_KEYS = {"schema", "transforms", "constraints", "outputs", "engine"}
_ENGINE_KEYS = {"clamp", "tolerance", "band_multiplier", "parallelism", "oracle"}
_TERM = re.compile(r"\s*([+-])?\s*(\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)?\s*\*?\s*(w(\d+))?\s*")
_RELATION = re.compile(r"(<=|>=|==|=|<|>)")


def _expect(cond: bool, message: str, where: str) -> None:
    if not cond:
        raise QuerySpecError(message, where)


def _real(value: Any, where: str, minimum: float | None = None) -> float:
    _expect(
        isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value),
        f"expected a finite number, got {value!r}",
        where,
    )
    if minimum is not None:
        _expect(value >= minimum, f"must be at least {minimum}, got {value!r}", where)
    return float(value)


def _check_keys(obj: Any, allowed: set[str], required: set[str], where: str) -> None:
    _expect(isinstance(obj, dict), f"expected a mapping, got {type(obj).__name__}", where)
    for key in obj:
        _expect(key in allowed, f"unknown key {key!r}", where)
    for key in sorted(required - set(obj)):
        raise QuerySpecError(f"missing required key {key!r}", where)


def _linear_side(text: str, d: int, where: str) -> tuple[np.ndarray, float]:
    """Parse ``2*w1 - w3 + 0.5`` into coefficients and a constant."""
    coeffs = np.zeros(d)
    const = 0.0
    pos = 0
    text = text.strip()
    _expect(bool(text), "empty side of a constraint", where)
    first = True
    while pos < len(text):
        m = _TERM.match(text, pos)
        if not m or m.end() == pos or (m.group(2) is None and m.group(3) is None):
            raise QuerySpecError(f"cannot parse constraint near {text[pos:]!r}", where)
        if not first and m.group(1) is None:
            raise QuerySpecError(f"missing operator before {text[pos:].strip()!r}", where)
        sign = -1.0 if m.group(1) == "-" else 1.0
        num = float(m.group(2)) if m.group(2) is not None else 1.0
        if m.group(3) is not None:
            idx = int(m.group(4))
            _expect(1 <= idx <= d, f"weight w{idx} out of range w1..w{d}", where)
            coeffs[idx - 1] += sign * num
        else:
            const += sign * num
        pos = m.end()
        first = False
    return coeffs, const


def _constraint_from_text(text: str, d: int, where: str) -> LinearConstraint | None:
    parts = _RELATION.split(text)
    _expect(len(parts) == 3, f"expected exactly one of <=, >=, =, <, > in {text!r}", where)
    lhs, op, rhs = parts
    a, ca = _linear_side(lhs, d, where)
    b, cb = _linear_side(rhs, d, where)
    coeffs = a - b
    bound = cb - ca
    if np.all(coeffs == 1.0) and op in ("=", "==") and bound == 1.0:
        return None  # the simplex condition, always implied
    _expect(bool(np.any(coeffs != 0)), f"constraint {text!r} involves no weight", where)
    return LinearConstraint(tuple(coeffs), op, bound)


def _parse_constraint(item: Any, d: int, where: str) -> LinearConstraint | None:
    if isinstance(item, str):
        return _constraint_from_text(item, d, where)
    _check_keys(item, {"coeffs", "sense", "bound"}, {"coeffs", "sense"}, where)
    coeffs = item["coeffs"]
    _expect(isinstance(coeffs, list) and len(coeffs) == d, f"coeffs must list {d} numbers", f"{where}.coeffs")
    coeffs = tuple(_real(c, f"{where}.coeffs[{i}]") for i, c in enumerate(coeffs))
    sense = item["sense"]
    _expect(sense in ("<=", "<", ">=", ">", "=", "=="), f"unknown sense {sense!r}", f"{where}.sense")
    bound = _real(item.get("bound", 0.0), f"{where}.bound")
    return LinearConstraint(coeffs, sense, bound)


def _parse_transform(item: Any, schema: AttributeSchema, where: str) -> Transform:
    _check_keys(item, {"attribute", "kind", "p", "k"}, {"attribute", "kind"}, where)
    name = item["attribute"]
    _expect(name in schema.names, f"unknown attribute {name!r}", f"{where}.attribute")
    kinds = [k.value for k in TransformKind]
    _expect(item["kind"] in kinds, f"unknown transform {item['kind']!r}; one of {', '.join(kinds)}", f"{where}.kind")
    kind = TransformKind(item["kind"])
    p = _real(item["p"], f"{where}.p", 1.0) if "p" in item else None
    k = _real(item["k"], f"{where}.k", 0.0) if "k" in item else None
    if kind is TransformKind.POWER:
        _expect(p is not None, "power needs an exponent p", where)
    else:
        _expect(p is None, f"{kind.value} takes no exponent p", f"{where}.p")
    if kind in (TransformKind.POISSON_CDF, TransformKind.POISSON_SURVIVAL, TransformKind.PEAK):
        _expect(k is not None, f"{kind.value} needs a threshold k", where)
        _expect(
            schema.kind_of(name) is AttributeKind.RATE,
            f"{kind.value} needs a rate attribute but {name!r} is {schema.kind_of(name).value}",
            f"{where}.kind",
        )
    else:
        _expect(k is None, f"{kind.value} takes no threshold k", f"{where}.k")
        _expect(
            schema.kind_of(name) is AttributeKind.NORMALIZED,
            f"{kind.value} needs a normalized attribute but {name!r} is a rate",
            f"{where}.kind",
        )
    return Transform(kind, name, p, k)


def parse_query_document(doc: Any) -> QuerySpec:
    """Validate an already-decoded query document."""
    _check_keys(doc, _TOP_KEYS, {"schema", "transforms"}, "query")

    raw_schema = doc["schema"]
    _expect(isinstance(raw_schema, list) and raw_schema, "expected a non-empty list of attributes", "schema")
    names, kinds = [], []
    for i, attr in enumerate(raw_schema):
        where = f"schema[{i}]"
        _check_keys(attr, {"name", "kind"}, {"name", "kind"}, where)
        _expect(isinstance(attr["name"], str) and attr["name"], "name must be a non-empty string", f"{where}.name")
        _expect(attr["name"] != "id", "'id' is reserved for the identifier column", f"{where}.name")
        _expect(attr["name"] not in names, f"duplicate attribute {attr['name']!r}", f"{where}.name")
        _expect(attr["kind"] in ("normalized", "rate"), f"kind must be normalized or rate, got {attr['kind']!r}", f"{where}.kind")
        names.append(attr["name"])
        kinds.append(AttributeKind(attr["kind"]))
    schema = AttributeSchema(tuple(names), tuple(kinds))
    d = schema.arity

    raw_tr = doc["transforms"]
    _expect(isinstance(raw_tr, list), "expected a list of transforms", "transforms")
    by_attr: dict[str, Transform] = {}
    for i, item in enumerate(raw_tr):
        tr = _parse_transform(item, schema, f"transforms[{i}]")
        _expect(tr.attribute not in by_attr, f"second transform for {tr.attribute!r}", f"transforms[{i}].attribute")
        by_attr[tr.attribute] = tr
    missing = [n for n in names if n not in by_attr]
    _expect(not missing, f"no transform for {', '.join(missing)}", "transforms")
    transforms = tuple(by_attr[n] for n in names)

    raw_cons = doc.get("constraints") or []
    _expect(isinstance(raw_cons, list), "expected a list of constraints", "constraints")
    constraints = []
    for i, item in enumerate(raw_cons):
        c = _parse_constraint(item, d, f"constraints[{i}]")
        if c is not None:
            constraints.append(c)

    outputs = doc.get("outputs", list(SETS))
    _expect(isinstance(outputs, list), "expected a list drawn from sky, nd, po", "outputs")
    for i, o in enumerate(outputs):
        _expect(o in SETS, f"unknown output {o!r}", f"outputs[{i}]")

    raw_engine = doc.get("engine") or {}
    _check_keys(raw_engine, _ENGINE_KEYS, set(), "engine")
    opts = {}
    for key in ("clamp", "oracle"):
        if key in raw_engine:
            _expect(isinstance(raw_engine[key], bool), "expected true or false", f"engine.{key}")
            opts[key] = raw_engine[key]
    if "tolerance" in raw_engine:
        opts["tolerance"] = _real(raw_engine["tolerance"], "engine.tolerance")
        _expect(opts["tolerance"] > 0, "must be positive", "engine.tolerance")
    if "band_multiplier" in raw_engine:
        opts["band_multiplier"] = _real(raw_engine["band_multiplier"], "engine.band_multiplier")
        _expect(opts["band_multiplier"] > 0, "must be positive", "engine.band_multiplier")
    if "parallelism" in raw_engine:
        par = raw_engine["parallelism"]
        _expect(isinstance(par, int) and not isinstance(par, bool) and par >= 1, "expected a positive integer", "engine.parallelism")
        opts["parallelism"] = par

    try:
        return QuerySpec(
            schema,
            transforms,
            tuple(constraints),
            tuple(o for o in SETS if o in outputs),
            EngineOptions(**opts),
        )
    except QuerySpecError:
        raise
    except FlexskyError as exc:
        raise QuerySpecError(str(exc), "constraints") from None


def parse_query_text(text: str, source: str = "<query>") -> QuerySpec:
    try:
        doc = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
        problem = getattr(exc, "problem", None) or str(exc)
        raise QuerySpecError(f"malformed document: {problem}", where) from None
    try:
        return parse_query_document(doc)
    except QuerySpecError as exc:
        raise QuerySpecError(str(exc), source) from None


def parse_query(path: str | Path) -> QuerySpec:
    """Read a query document (YAML, or JSON as a subset of YAML)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise QuerySpecError(f"cannot read query: {exc.strerror or exc}", str(path)) from None
    return parse_query_text(text, str(path))


# -- result documents --------------------------------------------------------


def dumps_document(doc: dict) -> str:
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def parse_schema_flag(text: str) -> AttributeSchema:
    """``"rate:rate,dist:normalized"`` to a schema."""
    pairs = []
    for part in text.split(","):
        name, sep, kind = part.strip().partition(":")
        if not sep or kind not in ("rate", "normalized"):
            raise DataError(f"schema entry {part!r} is not name:rate or name:normalized")
        pairs.append((name.strip(), kind))
    try:
        return AttributeSchema.of(pairs)
    except FlexskyError as exc:
        raise DataError(str(exc)) from None


def default_schema(d: int) -> AttributeSchema:
    """One rate attribute followed by ``d - 1`` normalized ones."""
    if d < 1:
        raise DataError(f"arity must be at least 1, got {d}")
    return AttributeSchema.of([("rate", "rate")] + [(f"x{i}", "normalized") for i in range(1, d)])


__all__ = [
    "load_relation",
    "write_relation",
    "format_real",
    "gen_dataset",
    "EngineOptions",
    "QuerySpec",
    "parse_query",
    "parse_query_text",
    "parse_query_document",
    "dumps_document",
    "parse_schema_flag",
    "default_schema",
]
