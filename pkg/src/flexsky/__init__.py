"""Flexible skyline queries (SKY, ND, PO) over monotone scoring families with
Poisson cumulative and survival terms."""

from .engine import EngineConfig, QueryResult, f_dominates, nd, po, run_query, sky
from .errors import FlexskyError
from .poisson import (
    NumericsConfig,
    PoissonParams,
    cdf,
    clamped_cdf,
    clamped_survival,
    pmf,
    quantile,
    survival,
    two_sigma_band,
)
from .scoring import (
    AttributeKind,
    AttributeSchema,
    LinearConstraint,
    Relation,
    ScoreMatrix,
    ScoringFamily,
    Transform,
    TransformKind,
    WeightPolytope,
    apply_transform,
    score_matrix,
)

__version__ = "0.1.0"
