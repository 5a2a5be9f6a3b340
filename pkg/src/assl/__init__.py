"""Adversarial self-supervised learning for skeleton-based action recognition.

A small workbench for semi-supervised sequence classification on 3D skeleton
data: masked-sequence inpainting, neighborhood-consistency regularization and
adversarial feature alignment between the labeled and unlabeled pools, plus
classic semi-supervised baselines and an ablation harness, all on a
deterministic synthetic corpus.
"""

from .baselines import (
    STRATEGY_NAMES,
    StrategySpec,
    entmin_loss,
    pseudo_label_round,
    select_pseudo_labels,
    vat_direction,
    vat_loss,
)
from .data import (
    DatasetSplit,
    MaskSpec,
    SkeletonSequence,
    SyntheticConfig,
    apply_mask,
    generate_synthetic,
    load_dataset,
    make_split,
    prepare_input,
    random_mask,
    write_dataset,
)
from .errors import (
    CheckpointError,
    ConfigError,
    ContractError,
    DataFormatError,
    NumericError,
    PoolSizeError,
    SplitError,
)
from .losses import (
    LossReport,
    adversarial_loss,
    center_ce_loss,
    inpainting_loss,
    kl_divergence,
    neighborhood_kl_loss,
    supervised_loss,
    total_objective,
)
from .models import ModelBundle, load_checkpoint, save_checkpoint
from .neighborhood import (
    FeatureBank,
    NeighborSet,
    PositiveSet,
    attention_weights,
    knn_query,
    local_center,
    neighbor_quality_ratio,
    rebuild_bank,
    select_positive,
)
from .seeding import derive_seed
from .trainer import (
    EVAL_FRAME_SEED,
    ExperimentResult,
    MetricsRow,
    TrainConfig,
    evaluate,
    export_embeddings,
    lr_at,
    make_batches,
    predict_labels,
    read_metrics_csv,
    run_ablation,
    run_experiment,
    run_k_sweep,
    train_step,
    write_metrics_csv,
)

__version__ = "0.1.0"

__all__ = [
    "STRATEGY_NAMES",
    "StrategySpec",
    "entmin_loss",
    "pseudo_label_round",
    "select_pseudo_labels",
    "vat_direction",
    "vat_loss",
    "DatasetSplit",
    "MaskSpec",
    "SkeletonSequence",
    "SyntheticConfig",
    "apply_mask",
    "generate_synthetic",
    "load_dataset",
    "make_split",
    "prepare_input",
    "random_mask",
    "write_dataset",
    "CheckpointError",
    "ConfigError",
    "ContractError",
    "DataFormatError",
    "NumericError",
    "PoolSizeError",
    "SplitError",
    "LossReport",
    "adversarial_loss",
    "center_ce_loss",
    "inpainting_loss",
    "kl_divergence",
    "neighborhood_kl_loss",
    "supervised_loss",
    "total_objective",
    "ModelBundle",
    "load_checkpoint",
    "save_checkpoint",
    "FeatureBank",
    "NeighborSet",
    "PositiveSet",
    "attention_weights",
    "knn_query",
    "local_center",
    "neighbor_quality_ratio",
    "rebuild_bank",
    "select_positive",
    "derive_seed",
    "EVAL_FRAME_SEED",
    "ExperimentResult",
    "MetricsRow",
    "TrainConfig",
    "evaluate",
    "export_embeddings",
    "lr_at",
    "make_batches",
    "predict_labels",
    "read_metrics_csv",
    "run_ablation",
    "run_experiment",
    "run_k_sweep",
    "train_step",
    "write_metrics_csv",
    "__version__",
]
