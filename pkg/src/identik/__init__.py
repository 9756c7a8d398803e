"""Rank-one face identification accuracy and demographic disparity metrics.

Works from precomputed face embeddings: builds probe/gallery splits, finds
rank-one mated and non-mated scores, and reports d', tail separation and
false positive identification rates per demographic group.
"""

__version__ = "0.1.0"

from .errors import IdentikError
from .model import (
    DemographicGroup,
    DistributionStats,
    EmbeddingStore,
    ImageRecord,
    ScoreSample,
    ValidationReport,
    validate_dataset,
)
from .ingest import read_embeddings, read_manifest, write_embeddings, write_manifest
from .partition import (
    BalanceSpec,
    ProbeGallerySplit,
    build_balanced_split,
    build_split,
    time_between_mated,
)
from .matching import (
    RankOneResult,
    cosine,
    gallery_size_sweep,
    one_to_one_distributions,
    rank_one_scores,
)
from .metrics import (
    MetricReport,
    build_report,
    d_prime,
    delta_tail,
    diff_distribution,
    empirical_quantile,
    fixed_threshold_rates,
    open_set_fpir,
    threshold_for_fmr,
)

__all__ = [
    "BalanceSpec", "DemographicGroup", "DistributionStats", "EmbeddingStore", "IdentikError",
    "ImageRecord", "MetricReport", "ProbeGallerySplit", "RankOneResult", "ScoreSample",
    "ValidationReport", "build_balanced_split", "build_report", "build_split", "cosine",
    "d_prime", "delta_tail", "diff_distribution", "empirical_quantile", "fixed_threshold_rates",
    "gallery_size_sweep", "one_to_one_distributions", "open_set_fpir", "rank_one_scores",
    "read_embeddings", "read_manifest", "threshold_for_fmr", "time_between_mated",
    "validate_dataset", "write_embeddings", "write_manifest",
]
