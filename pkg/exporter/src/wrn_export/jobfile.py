"""Key=value job configuration files for export and training runs."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path


def read_kv_file(path) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


@dataclass
class ExportJob:
    checkpoint: str
    output_dir: str
    splits: list[str] = field(default_factory=lambda: [
        "cifar10-train", "cifar10-test", "svhn-test"])
    data_root: str = "./data"
    batch_size: int = 256
    device: str = "cpu"
    depth: int = 28
    widen: int = 10

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.splits:
            raise ValueError("at least one split is required")


@dataclass
class TrainJob:
    output_checkpoint: str
    data_root: str = "./data"
    epochs: int = 350
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 1024
    seed: int = 0
    sn: bool = True
    device: str = "cpu"
    depth: int = 28
    widen: int = 10
    download: bool = False

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


_BOOL = {"1": True, "true": True, "yes": True,
         "0": False, "false": False, "no": False}


def _coerce(value: str, like):
    if isinstance(like, bool):
        if value.lower() not in _BOOL:
            raise ValueError(f"cannot parse boolean from {value!r}")
        return _BOOL[value.lower()]
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    if isinstance(like, list):
        return [tok.strip() for tok in value.split(",") if tok.strip()]
    return value


def _from_kv(cls, kv: dict[str, str], required: tuple[str, ...]):
    defaults = cls(**{name: f"<{name}>" for name in required})
    kwargs = {}
    for key, value in kv.items():
        if not hasattr(defaults, key):
            raise ValueError(f"unknown job key {key!r}")
        kwargs[key] = _coerce(value, getattr(defaults, key))
    for name in required:
        if name not in kwargs:
            raise ValueError(f"job file missing required key {name!r}")
    return cls(**kwargs)


def load_export_job(path) -> ExportJob:
    return _from_kv(ExportJob, read_kv_file(path), ("checkpoint", "output_dir"))


def load_train_job(path) -> TrainJob:
    return _from_kv(TrainJob, read_kv_file(path), ("output_checkpoint",))
