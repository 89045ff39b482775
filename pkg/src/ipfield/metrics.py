"""Evaluation metrics: accuracy, ECE, AUROC, and the softmax-entropy baseline.

Score conventions: in-distribution samples score HIGH for density values and
LOW for entropy, so the entropy baseline negates its scores before AUROC and
one convention (iD-high) serves everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import rankdata

DEFAULT_ECE_BINS = 15


def auroc(scores_id, scores_ood) -> float:
    """Probability that a random iD score exceeds a random OOD score.

    Mann-Whitney formulation with ties counted one half; iD is the positive
    class under the high-score convention. Exactly rank-based, so any
    strictly increasing transform of the scores leaves the result unchanged.
    """
    a = np.asarray(scores_id, dtype=np.float64).ravel()
    b = np.asarray(scores_ood, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("score lists must be nonempty")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("scores must be finite")
    ranks = rankdata(np.concatenate([a, b]))
    u = ranks[: a.size].sum() - a.size * (a.size + 1) / 2.0
    return float(u / (a.size * b.size))


def ece(confidences, correct, num_bins: int = DEFAULT_ECE_BINS) -> float:
    """Expected calibration error over equal-width confidence bins.

    ECE = sum_b (|b|/n) * |acc(b) - conf(b)|; empty bins contribute nothing.
    Confidence 1.0 lands in the last bin.
    """
    conf = np.asarray(confidences, dtype=np.float64).ravel()
    corr = np.asarray(correct, dtype=bool).ravel()
    if conf.shape != corr.shape:
        raise ValueError("confidences and correct flags must have equal length")
    if conf.size == 0:
        raise ValueError("inputs must be nonempty")
    if num_bins < 1:
        raise ValueError("num_bins must be >= 1")
    if not np.all(np.isfinite(conf)) or conf.min() < 0.0 or conf.max() > 1.0:
        raise ValueError("confidences must lie in [0, 1]")
    idx = np.minimum((conf * num_bins).astype(np.int64), num_bins - 1)
    total = 0.0
    for b in range(num_bins):
        mask = idx == b
        count = int(mask.sum())
        if count == 0:
            continue
        total += (count / conf.size) * abs(corr[mask].mean() - conf[mask].mean())
    return float(total)


def accuracy(predictions, truth) -> float:
    """Fraction of exact label matches."""
    pred = np.asarray(predictions).ravel()
    true = np.asarray(truth).ravel()
    if pred.shape != true.shape:
        raise ValueError("predictions and truth must have equal length")
    if pred.size == 0:
        raise ValueError("inputs must be nonempty")
    return float(np.mean(pred == true))


def softmax_entropy(logits) -> np.ndarray:
    """Per-row Shannon entropy of the softmax distribution, in nats.

    Computed with a max shift for stability; results lie in [0, ln C].
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] < 2:
        raise ValueError(f"logits must be (B, C) with C >= 2, got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("logits must be finite")
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    p = np.exp(logp)
    return -np.where(p > 0.0, p * logp, 0.0).sum(axis=1)


@dataclass
class EvalReport:
    """Metrics for one experiment run. Fields the run cannot compute are None
    (e.g. accuracy/ECE when scoring bare feature files with no classifier)."""

    auroc: Optional[float] = None
    accuracy: Optional[float] = None
    ece: Optional[float] = None
    n_id: int = 0
    n_ood: int = 0
    bandwidth_used: float = float("nan")

    def __post_init__(self):
        for name in ("auroc", "accuracy", "ece"):
            v = getattr(self, name)
            if v is not None and not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.n_id < 0 or self.n_ood < 0:
            raise ValueError("counts must be nonnegative")

    def to_kv_text(self) -> str:
        """Flat ``metric=value`` lines; absent metrics are omitted."""
        lines = []
        for name in ("accuracy", "ece", "auroc"):
            v = getattr(self, name)
            if v is not None:
                lines.append(f"{name}={v:.17g}")
        lines.append(f"n_id={self.n_id}")
        lines.append(f"n_ood={self.n_ood}")
        lines.append(f"bandwidth_used={self.bandwidth_used:.17g}")
        return "\n".join(lines) + "\n"


def write_sweep_csv(table, path) -> None:
    """Write a bandwidth-sweep table as ``h,auroc`` rows."""
    with open(path, "w", newline="") as fh:
        fh.write("h,auroc\n")
        for h, score in table:
            fh.write(f"{h:.17g},{score:.17g}\n")
