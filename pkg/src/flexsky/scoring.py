"""Relations, per-attribute transforms and weight polytopes.

A :class:`ScoringFamily` stands for the set of functions

    f_w(t) = sum_i w_i * g_i(t[A_i])

where each ``g_i`` is a fixed :class:`Transform` and ``w`` ranges over a
:class:`WeightPolytope`.  Lower scores are better.  Because every ``f_w`` is
linear in ``w``, comparing tuples over the whole family reduces to comparing
them at the polytope's vertices, so the engine only ever looks at the
tuples-by-vertices :class:`ScoreMatrix`.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import poisson
from .errors import (
    DataError,
    InfeasibleFamilyError,
    SchemaMismatchError,
    TransformError,
    UnsupportedDimensionError,
)
from .poisson import DEFAULT_CONFIG, NumericsConfig

VERTEX_TOL = 1e-9
MAX_VERTEX_DIMENSION = 8


class AttributeKind(str, enum.Enum):
    NORMALIZED = "normalized"
    RATE = "rate"


@dataclass(frozen=True)
class AttributeSchema:
    names: tuple[str, ...]
    kinds: tuple[AttributeKind, ...]

    def __post_init__(self):
        names = tuple(self.names)
        kinds = tuple(AttributeKind(k) for k in self.kinds)
        if not names:
            raise SchemaMismatchError("a schema needs at least one attribute")
        if len(names) != len(kinds):
            raise SchemaMismatchError(f"{len(names)} names but {len(kinds)} kinds")
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise SchemaMismatchError(f"duplicate attribute names: {', '.join(dupes)}")
        if "id" in names:
            raise SchemaMismatchError("'id' is reserved for the tuple identifier column")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "kinds", kinds)

    @classmethod
    def of(cls, pairs: Iterable[tuple[str, str | AttributeKind]]) -> "AttributeSchema":
        pairs = list(pairs)
        return cls(tuple(n for n, _ in pairs), tuple(AttributeKind(k) for _, k in pairs))

    @property
    def arity(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaMismatchError(f"unknown attribute {name!r}") from None

    def kind_of(self, name: str) -> AttributeKind:
        return self.kinds[self.index(name)]

    def check_value(self, name: str, value: float) -> None:
        """Raise :class:`DataError` if ``value`` is outside the attribute's domain."""
        kind = self.kind_of(name)
        if not math.isfinite(value):
            raise DataError(f"{name}={value!r} is not finite")
        if kind is AttributeKind.NORMALIZED and not 0.0 <= value <= 1.0:
            raise DataError(f"{name}={value!r} lies outside [0, 1]")
        if kind is AttributeKind.RATE and value < 0.0:
            raise DataError(f"{name}={value!r} is a negative rate")


@dataclass(frozen=True)
class Record:
    """One tuple of a relation."""

    id: str
    values: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class Relation:
    """Ordered tuples over a schema. ``values`` is an ``(n, d)`` float array."""

    schema: AttributeSchema
    ids: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim != 2 and len(ids) == 0:
            values = values.reshape(0, self.schema.arity)
        if values.ndim != 2 or values.shape[1] != self.schema.arity:
            raise SchemaMismatchError(
                f"relation values have shape {values.shape}, schema arity is {self.schema.arity}"
            )
        if values.shape[0] != len(ids):
            raise SchemaMismatchError(f"{len(ids)} ids for {values.shape[0]} rows")
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise DataError(f"duplicate tuple ids: {', '.join(dupes)}")
        for row, tid in zip(values, ids):
            for name, v in zip(self.schema.names, row):
                try:
                    self.schema.check_value(name, float(v))
                except DataError as exc:
                    raise DataError(f"tuple {tid}: {exc}") from None
        values.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_records(cls, schema: AttributeSchema, records: Iterable[Record]) -> "Relation":
        records = list(records)
        values = np.array([r.values for r in records], dtype=float).reshape(
            len(records), schema.arity
        )
        return cls(schema, tuple(r.id for r in records), values)

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self):
        for tid, row in zip(self.ids, self.values):
            yield Record(tid, tuple(float(v) for v in row))

    def take(self, indices: Sequence[int]) -> "Relation":
        idx = list(indices)
        return Relation(self.schema, tuple(self.ids[i] for i in idx), self.values[idx])

    def select(self, ids: Iterable[str]) -> "Relation":
        pos = {tid: i for i, tid in enumerate(self.ids)}
        return self.take([pos[t] for t in ids])


class TransformKind(str, enum.Enum):
    IDENTITY = "identity"
    POWER = "power"
    POISSON_CDF = "poisson_cdf"
    POISSON_SURVIVAL = "poisson_survival"
    PEAK = "peak"
    COMPLEMENT = "complement"


_RATE_KINDS = {TransformKind.POISSON_CDF, TransformKind.POISSON_SURVIVAL, TransformKind.PEAK}


@dataclass(frozen=True)
class Transform:
    """Maps one attribute's raw value into ``[0, 1]``.

    ``p`` is the exponent of ``power``; ``k`` is the count threshold of the
    three Poisson kinds.
    """

    kind: TransformKind
    attribute: str
    p: float | None = None
    k: float | None = None

    def __post_init__(self):
        kind = TransformKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is TransformKind.POWER:
            if self.p is None or not math.isfinite(self.p) or self.p < 1:
                raise TransformError(f"{self.attribute}: power needs an exponent p >= 1")
        elif self.p is not None:
            raise TransformError(f"{self.attribute}: {kind.value} takes no exponent")
        if kind in _RATE_KINDS:
            if self.k is None or not math.isfinite(self.k) or self.k < 0:
                raise TransformError(f"{self.attribute}: {kind.value} needs a threshold k >= 0")
        elif self.k is not None:
            raise TransformError(f"{self.attribute}: {kind.value} takes no threshold")

    @property
    def needs_rate(self) -> bool:
        return self.kind in _RATE_KINDS

    @property
    def monotone(self) -> bool:
        return self.kind is not TransformKind.PEAK

    def describe(self) -> dict:
        out = {"attribute": self.attribute, "kind": self.kind.value}
        if self.p is not None:
            out["p"] = self.p
        if self.k is not None:
            out["k"] = self.k
        return out


def apply_transform(
    tr: Transform, value: float, config: NumericsConfig = DEFAULT_CONFIG
) -> float:
    """Evaluate ``tr`` at a raw attribute value.

    For the Poisson kinds ``value`` is the rate. With ``config.clamp_enabled``
    the Poisson terms use their clamped forms.
    """
    value = float(value)
    kind = tr.kind
    if tr.needs_rate:
        if not math.isfinite(value) or value < 0:
            raise TransformError(f"{tr.attribute}: {kind.value} needs a rate >= 0, got {value!r}")
    elif not 0.0 <= value <= 1.0:
        raise TransformError(f"{tr.attribute}: {kind.value} needs a value in [0, 1], got {value!r}")

    if kind is TransformKind.IDENTITY:
        return value
    if kind is TransformKind.POWER:
        return value**tr.p
    if kind is TransformKind.COMPLEMENT:
        return 1.0 - value

    clamp = config.clamp_enabled
    if kind is TransformKind.PEAK:
        use_cdf = tr.k < value
    else:
        use_cdf = kind is TransformKind.POISSON_CDF
    if use_cdf:
        return poisson.clamped_cdf(value, tr.k, config) if clamp else poisson.cdf(value, tr.k)
    if clamp:
        return poisson.clamped_survival(value, tr.k, config)
    return poisson.survival(value, tr.k, config)


def transform_column(
    tr: Transform, values: np.ndarray, config: NumericsConfig = DEFAULT_CONFIG
) -> np.ndarray:
    """Vectorised :func:`apply_transform`; each distinct value is evaluated once."""
    values = np.asarray(values, dtype=float)
    if not tr.needs_rate:
        bad = (values < 0) | (values > 1) | ~np.isfinite(values)
        if bad.any():
            apply_transform(tr, float(values[bad][0]), config)
        if tr.kind is TransformKind.IDENTITY:
            return values.copy()
        if tr.kind is TransformKind.POWER:
            return values**tr.p
        return 1.0 - values
    uniq, inverse = np.unique(values, return_inverse=True)
    out = np.array([apply_transform(tr, v, config) for v in uniq])
    return out[inverse].reshape(values.shape)


class Sense(str, enum.Enum):
    LE = "<="
    GE = ">="
    EQ = "="


_SENSE_ALIASES = {"<=": Sense.LE, "<": Sense.LE, ">=": Sense.GE, ">": Sense.GE, "=": Sense.EQ, "==": Sense.EQ}


@dataclass(frozen=True)
class LinearConstraint:
    """``coeffs @ w  sense  bound``. Strict senses are stored as their closures."""

    coeffs: tuple[float, ...]
    sense: Sense
    bound: float = 0.0

    def __post_init__(self):
        sense = self.sense
        if not isinstance(sense, Sense):
            try:
                sense = _SENSE_ALIASES[str(sense)]
            except KeyError:
                raise InfeasibleFamilyError(f"unknown constraint sense {self.sense!r}") from None
        object.__setattr__(self, "sense", sense)
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        object.__setattr__(self, "bound", float(self.bound))

    def as_le(self) -> list[tuple[np.ndarray, float]]:
        a = np.array(self.coeffs)
        if self.sense is Sense.LE:
            return [(a, self.bound)]
        if self.sense is Sense.GE:
            return [(-a, -self.bound)]
        return [(a, self.bound), (-a, -self.bound)]

    def describe(self) -> dict:
        return {"coeffs": list(self.coeffs), "sense": self.sense.value, "bound": self.bound}


def ordered_weights(dimension: int) -> list[LinearConstraint]:
    """``w_1 <= w_2 <= ... <= w_d`` as ``dimension - 1`` constraints."""
    out = []
    for i in range(dimension - 1):
        row = [0.0] * dimension
        row[i], row[i + 1] = 1.0, -1.0
        out.append(LinearConstraint(tuple(row), Sense.LE, 0.0))
    return out


@dataclass(frozen=True, eq=False)
class WeightPolytope:
    """Weights on the simplex ``sum w = 1, w >= 0`` cut by extra linear constraints.

    Vertices are enumerated once at construction; an empty polytope raises
    :class:`InfeasibleFamilyError`.
    """

    dimension: int
    constraints: tuple[LinearConstraint, ...] = ()
    vertices: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.dimension < 1:
            raise UnsupportedDimensionError("weight dimension must be at least 1")
        cons = tuple(self.constraints)
        for c in cons:
            if len(c.coeffs) != self.dimension:
                raise InfeasibleFamilyError(
                    f"constraint has {len(c.coeffs)} coefficients for {self.dimension} weights"
                )
        object.__setattr__(self, "constraints", cons)
        verts = enumerate_vertices(self)
        verts.setflags(write=False)
        object.__setattr__(self, "vertices", verts)

    @classmethod
    def simplex(cls, dimension: int) -> "WeightPolytope":
        return cls(dimension, ())

    def halfspaces(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """``(A_ub, b_ub, A_eq, b_eq)`` including the simplex constraints."""
        d = self.dimension
        ub_rows = [(-np.eye(d)[i], 0.0) for i in range(d)]
        eq_rows = [(np.ones(d), 1.0)]
        for c in self.constraints:
            if c.sense is Sense.EQ:
                eq_rows.append((np.array(c.coeffs), c.bound))
            else:
                ub_rows.extend(c.as_le())
        A_ub = np.array([r for r, _ in ub_rows])
        b_ub = np.array([b for _, b in ub_rows])
        A_eq = np.array([r for r, _ in eq_rows])
        b_eq = np.array([b for _, b in eq_rows])
        return A_ub, b_ub, A_eq, b_eq

    def contains(self, w: np.ndarray, tol: float = VERTEX_TOL) -> bool:
        return bool(self.contains_many(np.atleast_2d(w), tol)[0])

    def contains_many(self, W: np.ndarray, tol: float = VERTEX_TOL) -> np.ndarray:
        W = np.atleast_2d(np.asarray(W, dtype=float))
        return polytope_contains(W, *self.halfspaces(), tol=tol)

    def describe(self) -> dict:
        return {
            "dimension": self.dimension,
            "constraints": [c.describe() for c in self.constraints],
            "vertices": [list(map(float, v)) for v in self.vertices],
        }


def enumerate_vertices(polytope: WeightPolytope) -> np.ndarray:
    """All extreme points of ``polytope`` as rows, sorted lexicographically.

    Each vertex is the solution of ``sum w = 1`` together with ``d - 1``
    constraints held at equality; every such system is solved and the feasible
    solutions kept.
    """
    d = polytope.dimension
    if d > MAX_VERTEX_DIMENSION:
        raise UnsupportedDimensionError(
            f"vertex enumeration supports at most {MAX_VERTEX_DIMENSION} weights, got {d}"
        )
    A_ub, b_ub, A_eq, b_eq = polytope.halfspaces()
    # the simplex row is always active; pick the rest from everything else
    rows = np.vstack([A_ub, A_eq[1:]])
    rhs = np.concatenate([b_ub, b_eq[1:]])
    combos = list(itertools.combinations(range(rows.shape[0]), d - 1))
    subsets = np.array(combos, dtype=int).reshape(len(combos), d - 1)
    systems = np.empty((subsets.shape[0], d, d))
    targets = np.empty((subsets.shape[0], d))
    systems[:, 0, :] = 1.0
    targets[:, 0] = 1.0
    if d > 1:
        systems[:, 1:, :] = rows[subsets]
        targets[:, 1:] = rhs[subsets]
    regular = np.abs(np.linalg.det(systems)) > 1e-12
    if not regular.any():
        raise InfeasibleFamilyError("weight constraints admit no weight vector")
    points = np.linalg.solve(systems[regular], targets[regular][..., None])[..., 0]
    points[np.abs(points) < 1e-14] = 0.0
    points = points[polytope_contains(points, A_ub, b_ub, A_eq, b_eq)]
    if points.shape[0] == 0:
        raise InfeasibleFamilyError("weight constraints admit no weight vector")
    points = points[np.lexsort(points.T[::-1])]
    unique = [points[0]]
    for p in points[1:]:
        if all(np.max(np.abs(p - q)) > VERTEX_TOL for q in unique):
            unique.append(p)
    return np.array(unique)


def polytope_contains(W, A_ub, b_ub, A_eq, b_eq, tol: float = VERTEX_TOL) -> np.ndarray:
    ok = np.all(W @ A_ub.T <= b_ub + tol, axis=1)
    ok &= np.all(np.abs(W @ A_eq.T - b_eq) <= tol, axis=1)
    return ok


@dataclass(frozen=True, eq=False)
class ScoringFamily:
    schema: AttributeSchema
    transforms: tuple[Transform, ...]
    polytope: WeightPolytope

    def __post_init__(self):
        transforms = tuple(self.transforms)
        object.__setattr__(self, "transforms", transforms)
        names = self.schema.names
        if len(transforms) != len(names):
            raise SchemaMismatchError(
                f"{len(transforms)} transforms for {len(names)} attributes"
            )
        for name, kind, tr in zip(names, self.schema.kinds, transforms):
            if tr.attribute != name:
                raise SchemaMismatchError(
                    f"transform for {tr.attribute!r} sits in the slot of attribute {name!r}"
                )
            if tr.needs_rate and kind is not AttributeKind.RATE:
                raise TransformError(f"{name}: {tr.kind.value} needs a rate attribute")
            if not tr.needs_rate and kind is not AttributeKind.NORMALIZED:
                raise TransformError(f"{name}: {tr.kind.value} needs a normalized attribute")
        if self.polytope.dimension != len(names):
            raise SchemaMismatchError(
                f"weight dimension {self.polytope.dimension} differs from arity {len(names)}"
            )

    @property
    def monotone(self) -> bool:
        return all(tr.monotone for tr in self.transforms)

    def transformed(
        self, relation: Relation, config: NumericsConfig = DEFAULT_CONFIG
    ) -> np.ndarray:
        """``(n, d)`` matrix of ``g_i(t[A_i])``."""
        if relation.schema != self.schema:
            raise SchemaMismatchError(
                f"relation attributes {relation.schema.names} do not match "
                f"family attributes {self.schema.names}"
            )
        out = np.empty(relation.values.shape)
        for i, tr in enumerate(self.transforms):
            out[:, i] = transform_column(tr, relation.values[:, i], config)
        return out

    def describe(self) -> dict:
        return {
            "schema": [{"name": n, "kind": k.value} for n, k in zip(self.schema.names, self.schema.kinds)],
            "transforms": [tr.describe() for tr in self.transforms],
            "polytope": self.polytope.describe(),
        }


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """``scores[t, v] = vertices[v] @ transformed[t]``."""

    ids: tuple[str, ...]
    transformed: np.ndarray
    vertices: np.ndarray
    scores: np.ndarray
    _pos: Mapping[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_pos", {tid: i for i, tid in enumerate(self.ids)})

    @classmethod
    def build(cls, ids: Sequence[str], transformed: np.ndarray, vertices: np.ndarray) -> "ScoreMatrix":
        transformed = np.asarray(transformed, dtype=float)
        vertices = np.asarray(vertices, dtype=float)
        return cls(tuple(ids), transformed, vertices, transformed @ vertices.T)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    def index(self, tid: str) -> int:
        try:
            return self._pos[tid]
        except KeyError:
            raise KeyError(f"unknown tuple id {tid!r}") from None

    def row(self, tid: str) -> np.ndarray:
        return self.scores[self.index(tid)]

    def rows(self, tids: Sequence[str]) -> np.ndarray:
        return self.scores[[self.index(t) for t in tids]]


def score_matrix(
    relation: Relation, family: ScoringFamily, config: NumericsConfig = DEFAULT_CONFIG
) -> ScoreMatrix:
    return ScoreMatrix.build(relation.ids, family.transformed(relation, config), family.polytope.vertices)


def is_tuple_distinguishing_sample(
    family: ScoringFamily,
    tuples: Sequence[Record],
    config: NumericsConfig = DEFAULT_CONFIG,
) -> bool:
    """True iff no two of ``tuples`` share their whole vertex-score row."""
    if len(tuples) < 2:
        return True
    values = np.array([t.values for t in tuples], dtype=float)
    g = np.empty(values.shape)
    for i, tr in enumerate(family.transforms):
        g[:, i] = transform_column(tr, values[:, i], config)
    scores = g @ family.polytope.vertices.T
    rows = {tuple(r) for r in scores.tolist()}
    return len(rows) == len(tuples)


__all__ = [
    "AttributeKind",
    "AttributeSchema",
    "Record",
    "Relation",
    "TransformKind",
    "Transform",
    "apply_transform",
    "transform_column",
    "Sense",
    "LinearConstraint",
    "ordered_weights",
    "WeightPolytope",
    "enumerate_vertices",
    "ScoringFamily",
    "ScoreMatrix",
    "score_matrix",
    "is_tuple_distinguishing_sample",
]
