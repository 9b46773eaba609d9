"""Graph attention localizer for flow-guided nanodevice event datasets."""

from .data import DatasetError, HeteroSample, load_dataset, stratified_split
from .filtering import allowed_regions, argmax_region, clamp_scores
from .model import (
    ATTENTION, PLAIN, AnchorBitClassifier, Hyperparams, Localizer, ModelDims,
    build_model,
)
from .train import (
    EvalMetrics, TrainResult, evaluate, inverse_frequency_weights,
    predict_logits, predict_with_filter, train, weighted_random_baseline_f1,
)

__version__ = "0.1.0"

__all__ = [
    "ATTENTION", "PLAIN", "AnchorBitClassifier", "DatasetError", "EvalMetrics",
    "HeteroSample", "Hyperparams", "Localizer", "ModelDims", "TrainResult",
    "allowed_regions", "argmax_region", "build_model", "clamp_scores",
    "evaluate", "inverse_frequency_weights", "load_dataset", "predict_logits",
    "predict_with_filter", "stratified_split", "train",
    "weighted_random_baseline_f1",
]
