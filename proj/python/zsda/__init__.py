"""Zero-shot domain adaptation over multiway domain grids.

Domains live on a d_1 x ... x d_M lattice; per-domain linear heads share a
rank-K factor structure on top of a common learned representation. Heads for
unseen domains come either from tensor completion of the seen heads
(two-stage) or from end-to-end factorized training.
"""

from zsda._core import (
    ArchConfig,
    BoundsError,
    CompletionConfig,
    CompletionResult,
    CPFactors,
    DataError,
    DistanceAnalysis,
    DomainDataset,
    DomainError,
    DomainGrid,
    DomainMetrics,
    ExcessRiskResult,
    NumericError,
    ObservationMask,
    ParseError,
    PlantedModel,
    ShapeError,
    TrainConfig,
    TrainedModel,
    UnsupportedError,
    VersionError,
    additive_to_cp,
    complete,
    completion_generalization_term,
    cp_materialize,
    cp_reconstruct_head,
    diagonal_mask,
    distance_analysis,
    evaluate,
    excess_risk,
    explicit_mask,
    grid_transform_dataset,
    load_checkpoint,
    load_oracle,
    mean_metric,
    pdim_bound,
    plant_additive_model,
    plant_model,
    planted_dataset,
    read_dataset,
    sample_domain_data,
    sample_mask,
    save_checkpoint,
    save_oracle,
    train_end_to_end,
    train_erm,
    train_pooled_baseline,
    transform_points,
    transform_raster,
    two_stage,
    write_dataset,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
