from convoher2.training.config import (
    PipelineSettings,
    ResolvedConfig,
    TrainConfig,
    load_config,
    parse_config_text,
)
from convoher2.training.evaluate import (
    Predictions,
    SplitScore,
    evaluate_features,
    evaluate_split,
    predict_features,
    predict_image,
    predict_split,
    score_predictions,
)
from convoher2.training.history import EpochMetrics, TrainHistory, load_checkpoint_log
from convoher2.training.trainer import Trainer, train, train_on_cached_features

__all__ = [
    "EpochMetrics",
    "PipelineSettings",
    "Predictions",
    "ResolvedConfig",
    "SplitScore",
    "TrainConfig",
    "TrainHistory",
    "Trainer",
    "evaluate_features",
    "evaluate_split",
    "load_checkpoint_log",
    "load_config",
    "parse_config_text",
    "predict_features",
    "predict_image",
    "predict_split",
    "score_predictions",
    "train",
    "train_on_cached_features",
]
