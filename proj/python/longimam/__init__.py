# SPDX-License-Identifier: Apache-2.0
"""Python bindings for the longimam core library."""

from ._longimam import (
    DataError,
    NumericError,
    RunConfig,
    ShapeError,
    UsageError,
    auc,
    bootstrap_ci,
    cosine_lr,
    evaluate,
    exact_mean,
    ingest,
    report,
    scenarios,
    sequence_length,
    split,
    synth,
    train1,
    train2,
)

__all__ = [
    "DataError",
    "NumericError",
    "RunConfig",
    "ShapeError",
    "UsageError",
    "auc",
    "bootstrap_ci",
    "cosine_lr",
    "evaluate",
    "exact_mean",
    "ingest",
    "report",
    "scenarios",
    "sequence_length",
    "split",
    "synth",
    "train1",
    "train2",
]
