"""Python bindings for the arsivae C++ core."""

from ._arsivae import (
    ContractError,
    CorruptArchive,
    InvalidConfig,
    TrainingDivergence,
    UndefinedMetric,
    attribute_names,
    attribute_reg_loss,
    gaussian_kl,
    generate_dataset,
    latent_metrics,
    load_dataset,
    run_cli,
    spearman,
    ssim,
)

__all__ = [
    "ContractError",
    "CorruptArchive",
    "InvalidConfig",
    "TrainingDivergence",
    "UndefinedMetric",
    "attribute_names",
    "attribute_reg_loss",
    "gaussian_kl",
    "generate_dataset",
    "latent_metrics",
    "load_dataset",
    "run_cli",
    "spearman",
    "ssim",
]
