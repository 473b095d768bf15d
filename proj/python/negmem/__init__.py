"""Incremental linear classification over fixed feature vectors."""

from ._core import (
    Error,
    LinearClassifier,
    cli,
    compute_quota,
    dual_gap,
    generate_synthetic,
    greedy_diversify,
    load_features,
    normalize,
    run_experiment,
    save_features,
    train_svm,
)

__all__ = [
    "Error",
    "LinearClassifier",
    "cli",
    "compute_quota",
    "dual_gap",
    "generate_synthetic",
    "greedy_diversify",
    "load_features",
    "normalize",
    "run_experiment",
    "save_features",
    "train_svm",
]
