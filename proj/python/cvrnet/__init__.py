"""Cross-view relation network for paired-view mass detection (synthetic toolkit)."""

from ._core import (
    CvrError,
    ConfigError,
    DomainError,
    IoError,
    NumericalError,
    SchemaError,
    ShapeError,
    Checkpoint,
    Dataset,
    embed_geometry,
    evaluate,
    generate_dataset,
    geometric_normalize,
    gradcheck,
    iou,
    load_checkpoint,
    load_dataset,
    relation_block_forward,
    run_cli,
    train,
)

__all__ = [
    "CvrError",
    "ConfigError",
    "DomainError",
    "IoError",
    "NumericalError",
    "SchemaError",
    "ShapeError",
    "Checkpoint",
    "Dataset",
    "embed_geometry",
    "evaluate",
    "generate_dataset",
    "geometric_normalize",
    "gradcheck",
    "iou",
    "load_checkpoint",
    "load_dataset",
    "relation_block_forward",
    "run_cli",
    "train",
]
