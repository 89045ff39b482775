"""Density-field uncertainty quantification and OOD detection toolkit."""

from .datasets import (LabeledDataset2D, make_three_spirals, make_two_moons)
from .featfile import (FeatureMatrix, read_csv_features, read_features,
                       write_features)
from .field import (IpfField, OodDecision, calibrate_threshold, decide,
                    silverman_bandwidth, sweep_bandwidth)
from .gridmap import UncertaintyGrid, build_grid, render
from .metrics import EvalReport, accuracy, auroc, ece, softmax_entropy
from .net import (SnMlp, TrainConfig, forward, lipschitz_probe,
                  load_checkpoint, save_checkpoint, spectral_normalize, train)

__version__ = "0.1.0"

__all__ = [
    "LabeledDataset2D", "make_two_moons", "make_three_spirals",
    "FeatureMatrix", "read_features", "write_features", "read_csv_features",
    "IpfField", "OodDecision", "decide", "calibrate_threshold",
    "silverman_bandwidth", "sweep_bandwidth",
    "UncertaintyGrid", "build_grid", "render",
    "EvalReport", "accuracy", "auroc", "ece", "softmax_entropy",
    "SnMlp", "TrainConfig", "forward", "train", "spectral_normalize",
    "lipschitz_probe", "save_checkpoint", "load_checkpoint",
]
