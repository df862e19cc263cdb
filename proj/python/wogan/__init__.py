"""Requirement falsification with Wasserstein GAN test generation."""

from ._wogan import (
    Error,
    DimensionError,
    ExecutionError,
    FormatError,
    ParseError,
    PreconditionError,
    RangeError,
    SchemaError,
    Formula,
    Sut,
    make_sut,
    default_config,
    compute_quantile,
    rejection_draw_bound,
    rejection_draws,
    run,
    similarity_maxnorm,
    quantile_scores,
    cluster_count,
    diversity_score,
    compare,
    rank,
    ranks_from_counts,
    summarize,
    run_campaign,
    evaluate,
    rank_campaigns,
    report,
)

__version__ = "0.1.0"
