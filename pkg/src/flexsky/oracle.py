"""Brute-force reference implementations.

These exist to cross-check the engine, so they deliberately avoid its
machinery: transformed values and vertex scores are evaluated one cell at a
time with plain Python sums, comparisons are all-pairs with no ordering or
pruning, and potential optimality is probed by sampling rather than by linear
programming.  Only the polytope's vertex list is shared with the engine.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .poisson import DEFAULT_CONFIG, NumericsConfig
from .scoring import Relation, ScoringFamily, apply_transform


@dataclass(frozen=True)
class GridSpec:
    weight_step: float = 1e-2
    lam_step: float = 1e-2
    margin: float = 1e-6
    max_support: int = 3
    max_weight_points: int = 500_000

    def __post_init__(self):
        for name in ("weight_step", "lam_step"):
            step = getattr(self, name)
            if not 0 < step < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {step!r}")
        if self.margin < 0:
            raise ValueError("margin must be non-negative")
        if self.max_support < 1:
            raise ValueError("max_support must be at least 1")


@dataclass(frozen=True)
class PoCertificate:
    certified_po: frozenset[str]
    certified_not_po: frozenset[str]
    undecided: frozenset[str]


def _transformed(relation: Relation, family: ScoringFamily, config: NumericsConfig) -> list[list[float]]:
    return [
        [apply_transform(tr, float(v), config) for tr, v in zip(family.transforms, row)]
        for row in relation.values
    ]


def _vertex_scores(g: list[list[float]], family: ScoringFamily) -> list[list[float]]:
    verts = family.polytope.vertices.tolist()
    return [[math.fsum(w * x for w, x in zip(vert, row)) for vert in verts] for row in g]


def sky_naive(
    relation: Relation, family: ScoringFamily, config: NumericsConfig = DEFAULT_CONFIG
) -> set[str]:
    g = _transformed(relation, family, config)
    out = set()
    for i, t in enumerate(g):
        dominated = False
        for j, s in enumerate(g):
            if i != j and all(a <= b for a, b in zip(s, t)) and any(a < b for a, b in zip(s, t)):
                dominated = True
                break
        if not dominated:
            out.add(relation.ids[i])
    return out


def nd_brute(
    relation: Relation,
    family: ScoringFamily,
    tolerance: float = 1e-9,
    config: NumericsConfig = DEFAULT_CONFIG,
) -> set[str]:
    S = _vertex_scores(_transformed(relation, family, config), family)
    out = set()
    for i, t in enumerate(S):
        dominated = False
        for j, s in enumerate(S):
            if i == j:
                continue
            if all(a <= b + tolerance for a, b in zip(s, t)) and any(
                a < b - tolerance for a, b in zip(s, t)
            ):
                dominated = True
                break
        if not dominated:
            out.add(relation.ids[i])
    return out


def _weight_grid(family: ScoringFamily, step: float, limit: int) -> np.ndarray:
    d = family.polytope.dimension
    units = max(1, round(1.0 / step))
    while math.comb(units + d - 1, d - 1) > limit:
        units //= 2
    points = [
        [c / units for c in comp]
        for comp in _compositions(units, d)
    ]
    W = np.array(points, dtype=float).reshape(-1, d)
    return W[family.polytope.contains_many(W)]


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def _mixture_dominates(rows: np.ndarray, target: np.ndarray, step: float, margin: float) -> bool:
    k = rows.shape[0]
    units = max(1, round(1.0 / step))
    lam = np.array(list(_compositions(units, k)), dtype=float) / units
    mixes = lam @ rows
    ok = np.all(mixes <= target, axis=1) & np.any(mixes < target - margin, axis=1)
    return bool(ok.any())


def po_grid(
    relation: Relation,
    family: ScoringFamily,
    grid: GridSpec = GridSpec(),
    tolerance: float = 1e-9,
    config: NumericsConfig = DEFAULT_CONFIG,
) -> PoCertificate:
    """One-sided certification of potential optimality.

    A tuple is certified PO when some sampled weight vector makes it the
    unique minimiser by more than ``grid.margin``; it is certified not PO when
    a sampled mixture of ND tuples is nowhere worse and somewhere better by
    more than ``grid.margin``.  Everything else is undecided.
    """
    g = _transformed(relation, family, config)
    ids = relation.ids
    G = np.array(g, dtype=float).reshape(len(ids), family.polytope.dimension)

    certified_po = set()
    W = _weight_grid(family, grid.weight_step, grid.max_weight_points)
    if W.size and len(ids):
        F = G @ W.T
        if len(ids) == 1:
            certified_po.add(ids[0])
        else:
            order = np.argsort(F, axis=0, kind="stable")
            best = order[0]
            first = np.take_along_axis(F, order[:1], axis=0)[0]
            second = np.take_along_axis(F, order[1:2], axis=0)[0]
            for col in np.flatnonzero(second - first > grid.margin):
                certified_po.add(ids[int(best[col])])

    nd_ids = sorted(nd_brute(relation, family, tolerance, config))
    S = np.array(_vertex_scores(g, family), dtype=float).reshape(len(ids), -1)
    pos = {tid: i for i, tid in enumerate(ids)}
    certified_not_po = set()
    for t in ids:
        if t in certified_po:
            continue
        others = [pos[s] for s in nd_ids if s != t]
        target = S[pos[t]]
        for size in range(1, min(grid.max_support, len(others)) + 1):
            if size == 3 and math.comb(len(others), 3) > 300:
                break
            if any(
                _mixture_dominates(S[list(combo)], target, grid.lam_step, grid.margin)
                for combo in itertools.combinations(others, size)
            ):
                certified_not_po.add(t)
                break
    undecided = set(ids) - certified_po - certified_not_po
    return PoCertificate(frozenset(certified_po), frozenset(certified_not_po), frozenset(undecided))


__all__ = ["GridSpec", "PoCertificate", "sky_naive", "nd_brute", "po_grid"]
