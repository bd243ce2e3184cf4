"""Wasserstein distributionally robust linear learning with mixed continuous and discrete features."""
from .core import (INF, Dataset, DiscreteSchema, GroundMetric, Hypothesis, MixedSample, dy, dz, du,
                   ground_distance)
from .losses import LossSpec
from .master import BoxSupport, ModelConfig
from .cutter import CutterOptions, TrainResult, evaluate_worst_case, train, worst_case

__version__ = "0.1.0"

__all__ = ["INF", "Dataset", "DiscreteSchema", "GroundMetric", "Hypothesis", "MixedSample", "dy", "dz", "du",
           "ground_distance", "LossSpec", "BoxSupport", "ModelConfig", "CutterOptions", "TrainResult",
           "evaluate_worst_case", "train", "worst_case", "__version__"]
