"""SUMN: self-supervised user representations from behavior logs."""

from ._core import (
    Model,
    Vocabulary,
    __version__,
    accuracy,
    auc,
    build_vocab,
    consistency_loss,
    encode_behavior,
    gradcheck,
    pca_project,
    softmax,
    target_distribution,
    tokenize,
)

__all__ = [
    "Model",
    "Vocabulary",
    "__version__",
    "accuracy",
    "auc",
    "build_vocab",
    "consistency_loss",
    "encode_behavior",
    "gradcheck",
    "pca_project",
    "softmax",
    "target_distribution",
    "tokenize",
]
