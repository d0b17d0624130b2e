"""Few-shot representation laboratory.

Contrastive and supervised encoders over vector data, with episodic
N-way-m-shot linear-probe evaluation of the frozen features.
"""

from fslab._core import (
    Classifier,
    DataError,
    Encoder,
    NumericError,
    cosine_lr,
    evaluate,
    fuse,
    generate_dataset,
    info_nce,
    load_model,
    log_sum_exp,
    normalize_rows,
    train_ssl,
    train_supervised,
)

__all__ = [
    "Classifier",
    "DataError",
    "Encoder",
    "NumericError",
    "cosine_lr",
    "evaluate",
    "fuse",
    "generate_dataset",
    "info_nce",
    "load_model",
    "log_sum_exp",
    "normalize_rows",
    "train_ssl",
    "train_supervised",
]
