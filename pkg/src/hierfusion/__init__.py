"""Hierarchical classification with fused label structures.

The toolkit covers the full loop: organize a flat subclass space under
one or more 3-level label structures (given ones, or visual structures
induced from feature statistics by spectral clustering), train a
multi-task classifier whose auxiliary heads predict each structure's
superclass, and score predictions with structure-averaged hierarchical
measures next to flat accuracy.

Everything is deterministic given explicit seeds, and every artifact
(feature files, structure files, checkpoints, reports) round-trips
exactly. The `hierfusion` command drives the same code end to end.
"""

from .exceptions import (
    CheckpointError,
    ClassTooSmall,
    DegeneratePoints,
    DimensionMismatch,
    DivergedLoss,
    DuplicateSubclass,
    EigensolverFailure,
    EmptyBatch,
    EmptyCluster,
    EmptySuperclass,
    FeatureFileError,
    HierFusionError,
    IdOutOfRange,
    InvalidConfig,
    InvalidSpec,
    IsolatedClass,
    LabelOutOfRange,
    MalformedRow,
    NonFiniteValue,
    OrphanSubclass,
    StructureError,
    SubclassSpaceMismatch,
    UnknownLabel,
    UnknownSubclass,
    UnknownSuperclass,
)
from .features import (
    ClassStats,
    FeatureTable,
    SyntheticSpec,
    class_statistics,
    generate_synthetic,
    load_feature_table,
    save_feature_table,
    train_test_split,
)
from .metrics import (
    EvalReport,
    PredictionBatch,
    StructureScores,
    evaluate,
    hierarchical_prf,
    lca_a,
    load_predictions,
    save_predictions,
    tie_a,
    top1_accuracy,
)
from .model import (
    FusionConfig,
    FusionModel,
    LossBreakdown,
    TrainHistory,
    config_from_dict,
    config_to_dict,
    forward,
    gradient_check,
    init_model,
    load_checkpoint,
    multi_task_loss,
    predict,
    save_checkpoint,
    save_history,
    train,
)
from .rng import derive_seed, rng_from_seed
from .serialization import dump_json, format_float
from .structure_builder import (
    AffinityMatrix,
    SpectralEmbedding,
    adjusted_rand_index,
    affinity_matrix,
    build_visual_structure,
    class_distance,
    class_distance_matrix,
    kmeans,
    spectral_embedding,
    symmetric_eigen,
)
from .taxonomy import (
    ROOT,
    LabelStructure,
    StructureSet,
    augmented_set,
    lca_height,
    lca_heights,
    load_structure,
    load_structure_set,
    save_structure,
    superclass_of,
    tie_distance,
    validate_structure,
)

__version__ = "0.1.0"

__all__ = [
    "AffinityMatrix",
    "CheckpointError",
    "ClassStats",
    "ClassTooSmall",
    "DegeneratePoints",
    "DimensionMismatch",
    "DivergedLoss",
    "DuplicateSubclass",
    "EigensolverFailure",
    "EmptyBatch",
    "EmptyCluster",
    "EmptySuperclass",
    "EvalReport",
    "FeatureFileError",
    "FeatureTable",
    "FusionConfig",
    "FusionModel",
    "HierFusionError",
    "IdOutOfRange",
    "InvalidConfig",
    "InvalidSpec",
    "IsolatedClass",
    "LabelOutOfRange",
    "LabelStructure",
    "LossBreakdown",
    "MalformedRow",
    "NonFiniteValue",
    "OrphanSubclass",
    "PredictionBatch",
    "ROOT",
    "SpectralEmbedding",
    "StructureError",
    "StructureScores",
    "StructureSet",
    "SubclassSpaceMismatch",
    "SyntheticSpec",
    "TrainHistory",
    "UnknownLabel",
    "UnknownSubclass",
    "UnknownSuperclass",
    "adjusted_rand_index",
    "affinity_matrix",
    "augmented_set",
    "build_visual_structure",
    "class_distance",
    "class_distance_matrix",
    "class_statistics",
    "config_from_dict",
    "config_to_dict",
    "derive_seed",
    "dump_json",
    "evaluate",
    "format_float",
    "forward",
    "generate_synthetic",
    "gradient_check",
    "hierarchical_prf",
    "init_model",
    "kmeans",
    "lca_a",
    "lca_height",
    "lca_heights",
    "load_checkpoint",
    "load_feature_table",
    "load_predictions",
    "load_structure",
    "load_structure_set",
    "multi_task_loss",
    "predict",
    "rng_from_seed",
    "save_checkpoint",
    "save_feature_table",
    "save_history",
    "save_predictions",
    "save_structure",
    "spectral_embedding",
    "superclass_of",
    "symmetric_eigen",
    "tie_a",
    "tie_distance",
    "top1_accuracy",
    "train",
    "train_test_split",
    "validate_structure",
]
