"""Joint video moment retrieval and highlight detection."""

import json as _json

from ._core import (
    ConfigError,
    DataError,
    Error,
    IoError,
    LogLevel,
    Model,
    ModalityError,
    ModelConfig,
    NumericError,
    ShapeError,
    StateError,
    SynthSpec,
    TrainConfig,
    VideoSample,
    evaluate_json,
    load_dataset,
    set_log_level,
    synthesize,
    temporal_iou,
    train,
    write_dataset,
)


def evaluate(model, dataset, task="both"):
    """Metrics report of `model` on `dataset` as a nested dict."""
    return _json.loads(evaluate_json(model, dataset, task))


__all__ = [
    "ConfigError",
    "DataError",
    "Error",
    "IoError",
    "LogLevel",
    "Model",
    "ModalityError",
    "ModelConfig",
    "NumericError",
    "ShapeError",
    "StateError",
    "SynthSpec",
    "TrainConfig",
    "VideoSample",
    "evaluate",
    "load_dataset",
    "set_log_level",
    "synthesize",
    "temporal_iou",
    "train",
    "write_dataset",
]
