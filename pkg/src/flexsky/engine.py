"""Skyline operators: classic skyline, F-dominance, the non-dominated (ND) and
potentially optimal (PO) flexible skylines, and a query driver that shares one
score matrix between them."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .lp import convex_combination_dominates
from .poisson import NumericsConfig
from .scoring import Relation, ScoreMatrix, ScoringFamily, score_matrix

SETS = ("sky", "nd", "po")


@dataclass(frozen=True)
class EngineConfig:
    tolerance: float = 1e-9
    use_clamp: bool = False
    band_multiplier: float = 2.0
    parallelism: int = 1

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError(f"dominance tolerance must be positive, got {self.tolerance!r}")
        if self.parallelism < 1:
            raise ValueError(f"parallelism must be a positive integer, got {self.parallelism!r}")

    def numerics(self) -> NumericsConfig:
        return NumericsConfig(band_multiplier=self.band_multiplier, clamp_enabled=self.use_clamp)

    def describe(self) -> dict:
        return {
            "tolerance": self.tolerance,
            "use_clamp": self.use_clamp,
            "band_multiplier": self.band_multiplier,
            "parallelism": self.parallelism,
        }


@dataclass
class QueryResult:
    """Requested sets (``None`` when not requested), one witness per excluded
    tuple, per-phase timings in milliseconds and the configuration used."""

    sky: tuple[str, ...] | None = None
    nd: tuple[str, ...] | None = None
    po: tuple[str, ...] | None = None
    witnesses: dict[str, dict] = field(default_factory=dict)
    timing_ms: dict[str, float] = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def sets(self) -> dict[str, list[str]]:
        return {name: list(getattr(self, name)) for name in SETS if getattr(self, name) is not None}

    def document(self, timing: bool = True) -> dict:
        """Plain-data form. Timings are wall-clock and left out with ``timing=False``."""
        return {
            "sets": self.sets(),
            "witnesses": self.witnesses,
            "timing_ms": dict(self.timing_ms) if timing else {},
            "config": self.config,
        }


def pareto_dominates(a: np.ndarray, b: np.ndarray) -> bool:
    """``a <= b`` everywhere and ``a < b`` somewhere (lower is better)."""
    return bool(np.all(a <= b) and np.any(a < b))


def f_dominates(scores: ScoreMatrix, s: str, t: str, tolerance: float = 1e-9) -> bool:
    """Whether tuple ``s`` F-dominates tuple ``t``: no worse at every vertex
    within ``tolerance`` and better by more than ``tolerance`` at one."""
    if s == t:
        raise ValueError("a tuple is never compared with itself")
    a, b = scores.row(s), scores.row(t)
    return bool(np.all(a <= b + tolerance) and np.any(a < b - tolerance))


def _dominators(window: np.ndarray, row: np.ndarray, tol: float) -> np.ndarray:
    return np.all(window <= row + tol, axis=1) & np.any(window < row - tol, axis=1)


def _victims(window: np.ndarray, row: np.ndarray, tol: float) -> np.ndarray:
    return np.all(row <= window + tol, axis=1) & np.any(row < window - tol, axis=1)


def _window_filter(rows: np.ndarray, tol: float) -> tuple[list[int], dict[int, int]]:
    """Block-nested-loop pass in ascending row-sum order.

    Returns surviving row indices and a ``victim -> dominator`` map.  Each
    candidate is compared only with the current window; a candidate that
    enters the window evicts any members it dominates.
    """
    n, v = rows.shape
    order = np.lexsort((np.arange(n), rows.sum(axis=1)))
    window = np.empty((n, v))
    members: list[int] = []
    witness: dict[int, int] = {}
    for i in order:
        row = rows[i]
        k = len(members)
        if k:
            hit = np.flatnonzero(_dominators(window[:k], row, tol))
            if hit.size:
                witness[int(i)] = members[hit[0]]
                continue
            evict = _victims(window[:k], row, tol)
            if evict.any():
                keep = np.flatnonzero(~evict)
                for j in np.flatnonzero(evict):
                    witness[members[j]] = int(i)
                members = [members[j] for j in keep]
                window[: keep.size] = window[keep]
        window[len(members)] = row
        members.append(int(i))
    return members, witness


def _sky_indices(transformed: np.ndarray) -> tuple[list[int], dict[int, int]]:
    members, witness = _window_filter(transformed, 0.0)
    return sorted(members), witness


def _nd_indices(scores: np.ndarray, tol: float) -> tuple[list[int], dict[int, int]]:
    members, witness = _window_filter(scores, tol)
    # With a positive tolerance dominance is not transitive, so a survivor may
    # still be dominated by a tuple that left the window. Check survivors
    # against every row so the result is exactly the set of undominated tuples.
    final = []
    for i in members:
        hit = _dominators(scores, scores[i], tol)
        hit[i] = False
        found = np.flatnonzero(hit)
        if found.size:
            witness[i] = int(found[0])
        else:
            final.append(i)
    return sorted(final), witness


def _id_sorted(ids: Iterable[str]) -> tuple[str, ...]:
    return tuple(sorted(ids))


def sky(relation: Relation, family: ScoringFamily, config: EngineConfig = EngineConfig()) -> set[str]:
    """Tuples not Pareto-dominated in transformed attribute space."""
    g = family.transformed(relation, config.numerics())
    members, _ = _sky_indices(g)
    return {relation.ids[i] for i in members}


def nd(
    relation: Relation,
    family: ScoringFamily,
    config: EngineConfig = EngineConfig(),
    scores: ScoreMatrix | None = None,
) -> tuple[set[str], dict[str, str]]:
    """Tuples no other tuple F-dominates, with a dominator for each excluded one."""
    if scores is None:
        scores = score_matrix(relation, family, config.numerics())
    members, witness = _nd_indices(scores.scores, config.tolerance)
    ids = scores.ids
    return {ids[i] for i in members}, {ids[v]: ids[d] for v, d in witness.items()}


def po(
    relation: Relation,
    family: ScoringFamily,
    config: EngineConfig = EngineConfig(),
    scores: ScoreMatrix | None = None,
    nd_ids: Iterable[str] | None = None,
) -> tuple[set[str], dict[str, dict[str, float]]]:
    """ND tuples that no convex combination of the other ND tuples F-dominates.

    Excluded tuples map to the witnessing mixture weights.
    """
    if scores is None:
        scores = score_matrix(relation, family, config.numerics())
    if nd_ids is None:
        nd_ids, _ = nd(relation, family, config, scores)
    members = _id_sorted(nd_ids)

    def check(t: str):
        others = [s for s in members if s != t]
        return convex_combination_dominates(scores, others, t, config.tolerance)

    if config.parallelism > 1 and len(members) > 1:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            outcomes = list(pool.map(check, members))
    else:
        outcomes = [check(t) for t in members]
    keep, witness = set(), {}
    for t, (dominated, mixture) in zip(members, outcomes):
        if dominated:
            witness[t] = mixture
        else:
            keep.add(t)
    return keep, witness


def run_query(
    relation: Relation,
    family: ScoringFamily,
    config: EngineConfig = EngineConfig(),
    want: Iterable[str] = SETS,
) -> QueryResult:
    want = set(want)
    unknown = want - set(SETS)
    if unknown:
        raise ValueError(f"unknown result sets: {', '.join(sorted(unknown))}")
    result = QueryResult(config={**config.describe(), "family": family.describe()})
    if not want:
        return result
    numerics = config.numerics()
    timing = result.timing_ms

    if "sky" in want:
        start = time.perf_counter()
        g = family.transformed(relation, numerics)
        members, witness = _sky_indices(g)
        timing["sky"] = (time.perf_counter() - start) * 1e3
        result.sky = _id_sorted(relation.ids[i] for i in members)
        result.witnesses["sky"] = {relation.ids[v]: relation.ids[d] for v, d in sorted(witness.items())}

    if want & {"nd", "po"}:
        start = time.perf_counter()
        scores = score_matrix(relation, family, numerics)
        timing["score"] = (time.perf_counter() - start) * 1e3
        start = time.perf_counter()
        nd_set, nd_witness = nd(relation, family, config, scores)
        timing["nd"] = (time.perf_counter() - start) * 1e3
        if "nd" in want:
            result.nd = _id_sorted(nd_set)
            result.witnesses["nd"] = dict(sorted(nd_witness.items()))
        if "po" in want:
            start = time.perf_counter()
            po_set, po_witness = po(relation, family, config, scores, nd_set)
            timing["po"] = (time.perf_counter() - start) * 1e3
            result.po = _id_sorted(po_set)
            result.witnesses["po"] = dict(sorted(po_witness.items()))
    return result


def verify_witnesses(result: QueryResult, scores: ScoreMatrix, tolerance: float) -> list[str]:
    """Re-check every ND and PO witness against ``scores``; returns the victims
    whose witness fails."""
    bad = []
    for victim, dominator in result.witnesses.get("nd", {}).items():
        if not f_dominates(scores, dominator, victim, tolerance):
            bad.append(victim)
    for victim, mixture in result.witnesses.get("po", {}).items():
        weights = np.array(list(mixture.values()))
        mix = weights @ scores.rows(list(mixture)) / weights.sum()
        target = scores.row(victim)
        if not (np.all(mix <= target + tolerance) and np.any(mix < target - tolerance)):
            bad.append(victim)
    return bad


__all__ = [
    "EngineConfig",
    "QueryResult",
    "pareto_dominates",
    "f_dominates",
    "sky",
    "nd",
    "po",
    "run_query",
    "verify_witnesses",
]
