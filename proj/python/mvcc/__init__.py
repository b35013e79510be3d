"""Change captioning on bi-temporal image pairs."""

from ._mvcc_core import (
    ConfigError,
    IngestionError,
    NumericError,
    bleu,
    caption,
    cider_d,
    diff_cd_mask,
    evaluate,
    evaluate_files,
    generate_dataset,
    meteor_simplified,
    rouge_l,
    tokenize,
    train,
    train_config_text,
)

__all__ = [
    "ConfigError",
    "IngestionError",
    "NumericError",
    "bleu",
    "caption",
    "cider_d",
    "diff_cd_mask",
    "evaluate",
    "evaluate_files",
    "generate_dataset",
    "meteor_simplified",
    "rouge_l",
    "tokenize",
    "train",
    "train_config_text",
]

__version__ = "0.1.0"
