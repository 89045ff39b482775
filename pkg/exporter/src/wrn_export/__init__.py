"""WRN-28-10 penultimate-feature exporter writing the IPFF interchange format."""

from .export import export_features, extract_features
from .ipff import read_ipff, write_ipff
from .jobfile import ExportJob, TrainJob, load_export_job, load_train_job
from .train import evaluate_accuracy, train_wrn
from .wrn import WideResNet, load_checkpoint, save_checkpoint

__version__ = "0.1.0"

__all__ = [
    "WideResNet", "save_checkpoint", "load_checkpoint",
    "ExportJob", "TrainJob", "load_export_job", "load_train_job",
    "export_features", "extract_features", "train_wrn", "evaluate_accuracy",
    "write_ipff", "read_ipff",
]
