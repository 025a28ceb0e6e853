"""Spatially-coupled descriptor-pair aggregation for image retrieval.

The pipeline turns dense descriptor grids into compact global signatures:
vocabulary assignment, ordered cluster-pair correlation statistics, per-pair
singular bases with corpus centering, signature normalization, and two-stage
Gram-based dimensionality reduction.  `IstaPipeline` composes the whole chain;
the stage classes and functions below are the individual pieces.
"""
from __future__ import annotations

from .codebook import VisualCodebook, corpus_descriptor_matrix
from .config import PipelineConfig, parse_config
from .errors import (
    ConfigError,
    EvaluationError,
    FitError,
    FormatError,
    IstaError,
    NumericalError,
    ResourceError,
    ValidationError,
)
from .grids import (
    DescriptorGrid,
    GridPosition,
    grid_filename,
    load_corpus,
    load_grid,
    neighbor_offsets,
    neighborhood,
    normalize_grid,
    parse_desc_filename,
    save_grid,
)
from .normalize import (
    SignatureNormalizer,
    cross_cluster_normalize,
    l2_normalize,
    normalize_signature,
    power_normalize,
)
from .oracle import identity_trial, matching_kernel_oracle, naive_sta_tensor
from .pairs import (
    PairBasis,
    PairStatistics,
    PairTensorEncoder,
    RawSignature,
    SignatureLayout,
    accumulate_pair_stats,
    compute_pair_basis,
    encode_raw,
    grid_pair_stats,
    load_pair_basis,
    load_pair_stats,
    save_pair_basis,
    save_pair_stats,
)
from .pipeline import IstaPipeline
from .reduce import (
    BlockProjection,
    BlockReducer,
    FullProjection,
    FullReducer,
    ReductionModel,
    apply_block_reduction,
    apply_full_reduction,
    fit_block_reduction,
    fit_full_reduction,
    load_reduction_model,
    save_reduction_model,
)
from .retrieval import (
    GroundTruthEntry,
    Signature,
    average_precision,
    combine_resolutions,
    contribution_by_pair,
    load_ground_truth,
    load_signature,
    mean_ap,
    rank,
    read_ranking,
    save_ground_truth,
    save_signature,
    similarity,
    write_ranking,
)
from .synthetic import (
    SyntheticCorpus,
    make_synthetic_corpus,
    shuffle_grid_positions,
    shuffled_corpus,
    write_corpus,
)

__version__ = "0.1.0"

__all__ = [
    "BlockProjection",
    "BlockReducer",
    "ConfigError",
    "DescriptorGrid",
    "EvaluationError",
    "FitError",
    "FormatError",
    "FullProjection",
    "FullReducer",
    "GridPosition",
    "GroundTruthEntry",
    "IstaError",
    "IstaPipeline",
    "NumericalError",
    "PairBasis",
    "PairStatistics",
    "PairTensorEncoder",
    "PipelineConfig",
    "RawSignature",
    "ReductionModel",
    "ResourceError",
    "Signature",
    "SignatureLayout",
    "SignatureNormalizer",
    "SyntheticCorpus",
    "ValidationError",
    "VisualCodebook",
    "accumulate_pair_stats",
    "apply_block_reduction",
    "apply_full_reduction",
    "average_precision",
    "combine_resolutions",
    "compute_pair_basis",
    "contribution_by_pair",
    "corpus_descriptor_matrix",
    "cross_cluster_normalize",
    "encode_raw",
    "fit_block_reduction",
    "fit_full_reduction",
    "grid_filename",
    "grid_pair_stats",
    "identity_trial",
    "l2_normalize",
    "load_corpus",
    "load_ground_truth",
    "load_grid",
    "load_pair_basis",
    "load_pair_stats",
    "load_reduction_model",
    "load_signature",
    "make_synthetic_corpus",
    "matching_kernel_oracle",
    "mean_ap",
    "naive_sta_tensor",
    "neighbor_offsets",
    "neighborhood",
    "normalize_grid",
    "normalize_signature",
    "parse_config",
    "parse_desc_filename",
    "power_normalize",
    "rank",
    "read_ranking",
    "save_ground_truth",
    "save_grid",
    "save_pair_basis",
    "save_pair_stats",
    "save_reduction_model",
    "save_signature",
    "shuffle_grid_positions",
    "shuffled_corpus",
    "similarity",
    "write_corpus",
    "write_ranking",
]
