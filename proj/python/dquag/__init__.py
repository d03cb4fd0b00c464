"""Graph-based validation and repair for tabular data."""

from dquag._core import (
    Bundle,
    DquagError,
    calibrate_threshold,
    flag_features,
    inject,
    repair,
    sample_weights,
    score,
    synth,
    train,
    validate,
)

__all__ = [
    "Bundle",
    "DquagError",
    "calibrate_threshold",
    "flag_features",
    "inject",
    "repair",
    "sample_weights",
    "score",
    "synth",
    "train",
    "validate",
]
