"""Exact-versus-clamped benchmark on synthetic relations."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import poisson
from .engine import EngineConfig, nd, po
from .io import DEFAULT_RATE_RANGE, default_schema, gen_dataset
from .scoring import (
    Relation,
    ScoringFamily,
    Transform,
    TransformKind,
    WeightPolytope,
    ordered_weights,
    score_matrix,
)


@dataclass
class BenchReport:
    n: int
    d: int
    seed: int
    k: float
    rate_range: tuple[float, float]
    band_multiplier: float
    vertices: int
    nd_size: dict[str, int] = field(default_factory=dict)
    po_size: dict[str, int] = field(default_factory=dict)
    nd_symmetric_difference: list[str] = field(default_factory=list)
    clamp_error: dict[str, float] = field(default_factory=dict)
    filtered: dict[str, float] = field(default_factory=dict)
    timing_ms: dict[str, dict[str, float]] = field(default_factory=dict)

    def document(self) -> dict:
        doc = asdict(self)
        doc["rate_range"] = list(self.rate_range)
        doc["nd_symmetric_difference_count"] = len(self.nd_symmetric_difference)
        return doc


def bench_family(d: int, k: float) -> ScoringFamily:
    """Survival-of-rate term plus identity terms, weights ordered ``w1 <= ... <= wd``."""
    schema = default_schema(d)
    transforms = [Transform(TransformKind.POISSON_SURVIVAL, schema.names[0], k=k)]
    transforms += [Transform(TransformKind.IDENTITY, name) for name in schema.names[1:]]
    polytope = WeightPolytope(d, tuple(ordered_weights(d)))
    return ScoringFamily(schema, tuple(transforms), polytope)


def robust_subset(scores: np.ndarray, margin: float, cap: int) -> list[int]:
    """Greedy pick of rows whose pairwise differences exceed ``margin`` at every vertex."""
    kept: list[int] = []
    for i in range(scores.shape[0]):
        if len(kept) >= cap:
            break
        if kept:
            gaps = np.abs(scores[kept] - scores[i]).min(axis=1)
            if np.any(gaps <= margin):
                continue
        kept.append(i)
    return kept


def _timed(fn, *args, **kwargs):
    start = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, (time.perf_counter() - start) * 1e3


def run_bench(
    n: int = 10_000,
    d: int = 3,
    seed: int = 0,
    k: float = 25.0,
    clamp: bool = True,
    band_multiplier: float = 2.0,
    rate_range: tuple[float, float] = DEFAULT_RATE_RANGE,
    with_po: bool = False,
    filter_cap: int = 400,
    relation: Relation | None = None,
) -> BenchReport:
    family = bench_family(d, k)
    if relation is None:
        relation = gen_dataset(n, family.schema, seed, rate_range)
    report = BenchReport(
        n=len(relation),
        d=d,
        seed=seed,
        k=k,
        rate_range=tuple(rate_range),
        band_multiplier=band_multiplier,
        vertices=int(family.polytope.vertices.shape[0]),
    )
    modes = {"exact": EngineConfig(band_multiplier=band_multiplier)}
    if clamp:
        modes["clamp"] = EngineConfig(use_clamp=True, band_multiplier=band_multiplier)

    results = {}
    for name, cfg in modes.items():
        scores, t_score = _timed(score_matrix, relation, family, cfg.numerics())
        (nd_set, _), t_nd = _timed(nd, relation, family, cfg, scores)
        timing = {"score": t_score, "nd": t_nd}
        report.nd_size[name] = len(nd_set)
        if with_po:
            (po_set, _), t_po = _timed(po, relation, family, cfg, scores, nd_set)
            timing["po"] = t_po
            report.po_size[name] = len(po_set)
        report.timing_ms[name] = timing
        results[name] = (scores, nd_set)

    if clamp:
        exact_scores, exact_nd = results["exact"]
        clamp_scores, clamp_nd = results["clamp"]
        report.nd_symmetric_difference = sorted(exact_nd ^ clamp_nd)
        g_err = np.abs(clamp_scores.transformed[:, 0] - exact_scores.transformed[:, 0])
        s_err = np.abs(clamp_scores.scores - exact_scores.scores)
        cfg = modes["clamp"].numerics()
        rates = relation.values[:, 0]
        outside = np.array([not (lo <= k <= hi) for lo, hi in (poisson.two_sigma_band(r, cfg) for r in rates)])
        analytic = max(poisson.clamp_error_bound(r, cfg) for r in np.unique(rates))
        max_score_err = float(s_err.max())
        report.clamp_error = {
            "max_abs_transformed": float(g_err.max()),
            "mean_abs_transformed": float(g_err.mean()),
            "max_abs_score": max_score_err,
            "clamped_fraction": float(outside.mean()),
            "analytic_bound": float(analytic),
        }

        # Comparisons whose gap exceeds twice the score error plus the
        # dominance tolerance on both sides cannot flip under the clamp.
        tol = modes["exact"].tolerance
        margin = 2.0 * max_score_err + 2.0 * tol
        keep = robust_subset(exact_scores.scores, margin, filter_cap)
        sub = relation.take(keep)
        sub_exact, _ = nd(sub, family, modes["exact"])
        sub_clamp, _ = nd(sub, family, modes["clamp"])
        report.filtered = {
            "size": len(keep),
            "margin": margin,
            "nd_size": len(sub_exact),
            "nd_symmetric_difference_count": len(sub_exact ^ sub_clamp),
        }
    return report


__all__ = ["BenchReport", "bench_family", "robust_subset", "run_bench"]
