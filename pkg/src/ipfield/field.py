"""Information potential field: Gaussian-kernel density over reference features.

The field over reference rows z_1..z_N with kernel width h is

    psi(z) = (1/N) * sum_i exp(-||z - z_i||^2 / (2 h^2))

with the unnormalized kernel, so psi is in (0, 1] and equals 1 exactly when
every reference row coincides with the query. Thresholding, AUROC, and
heatmaps only depend on monotone transforms of psi, so the Gaussian
normalization constant is deliberately omitted; raw psi values are comparable
only at fixed (d, h).

Squared distances are computed by direct per-pair subtraction
(scipy's ``cdist`` sqeuclidean), not the d^2 = ||q||^2 + ||r||^2 - 2 q.r
expansion: the expansion's absolute error scales with ||z||^2 and, divided by
2 h^2, breaks the 1e-9 relative evaluation tolerance at small h. Direct
subtraction keeps the error relative to d^2 itself. Evaluation is blocked
over query and reference chunks in a fixed order, so results are bit-stable
for a fixed chunk size and within 1e-9 relative across chunk sizes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .featfile import FeatureMatrix
from .metrics import auroc

DEFAULT_QUERY_CHUNK = 256
DEFAULT_REF_CHUNK = 8192


def _as_matrix(features) -> np.ndarray:
    """Accept a FeatureMatrix or array-like; return a float64 (N, d) array."""
    if isinstance(features, FeatureMatrix):
        features = features.data
    arr = np.asarray(features, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {arr.shape}")
    return arr


@dataclass
class IpfField:
    """An immutable fitted field: reference rows plus a kernel width."""

    reference: np.ndarray
    bandwidth_h: float

    def __post_init__(self):
        ref = _as_matrix(self.reference)
        if ref.shape[0] < 1 or ref.shape[1] < 1:
            raise ValueError("reference must have at least one row and one column")
        if not np.all(np.isfinite(ref)):
            raise ValueError("reference contains non-finite values")
        if not (np.isfinite(self.bandwidth_h) and self.bandwidth_h > 0):
            raise ValueError(f"bandwidth_h must be positive, got {self.bandwidth_h}")
        ref = ref.copy()
        ref.setflags(write=False)
        self.reference = ref
        self.bandwidth_h = float(self.bandwidth_h)

    @property
    def n(self) -> int:
        return self.reference.shape[0]

    @property
    def dim(self) -> int:
        return self.reference.shape[1]

    def _check_queries(self, queries) -> np.ndarray:
        q = np.asarray(queries, dtype=np.float64)
        if q.ndim == 1:
            q = q[None, :]
        if q.ndim != 2 or q.shape[1] != self.dim:
            raise ValueError(
                f"queries must be (M, {self.dim}), got shape {np.shape(queries)}")
        if not np.all(np.isfinite(q)):
            raise ValueError("queries contain non-finite values")
        return q

    def evaluate(self, queries, query_chunk: int = DEFAULT_QUERY_CHUNK,
                 ref_chunk: int = DEFAULT_REF_CHUNK) -> np.ndarray:
        """psi for each query row; values in (0, 1] (0 only via underflow)."""
        q = self._check_queries(queries)
        inv = 1.0 / (2.0 * self.bandwidth_h ** 2)
        out = np.empty(q.shape[0], dtype=np.float64)
        for qs in range(0, q.shape[0], query_chunk):
            qblock = q[qs:qs + query_chunk]
            acc = np.zeros(qblock.shape[0], dtype=np.float64)
            for rs in range(0, self.n, ref_chunk):
                d2 = cdist(qblock, self.reference[rs:rs + ref_chunk], "sqeuclidean")
                acc += np.exp(-inv * d2).sum(axis=1)
            out[qs:qs + query_chunk] = acc / self.n
        return out

    def evaluate_log(self, queries, query_chunk: int = DEFAULT_QUERY_CHUNK,
                     ref_chunk: int = DEFAULT_REF_CHUNK) -> np.ndarray:
        """ln psi per query row, kept finite even where psi underflows to 0."""
        q = self._check_queries(queries)
        inv = 1.0 / (2.0 * self.bandwidth_h ** 2)
        out = np.empty(q.shape[0], dtype=np.float64)
        for qs in range(0, q.shape[0], query_chunk):
            qblock = q[qs:qs + query_chunk]
            # streaming logsumexp across reference chunks
            run_max = np.full(qblock.shape[0], -np.inf)
            run_sum = np.zeros(qblock.shape[0])
            for rs in range(0, self.n, ref_chunk):
                e = -inv * cdist(qblock, self.reference[rs:rs + ref_chunk],
                                 "sqeuclidean")
                m = e.max(axis=1)
                new_max = np.maximum(run_max, m)
                run_sum = (run_sum * np.exp(run_max - new_max)
                           + np.exp(e - new_max[:, None]).sum(axis=1))
                run_max = new_max
            out[qs:qs + query_chunk] = run_max + np.log(run_sum) - np.log(self.n)
        return out


@dataclass
class OodDecision:
    """Outcome of the threshold rule: OOD exactly when the score is below it."""

    score: float
    threshold: float
    is_ood: bool

    def __post_init__(self):
        if self.is_ood != (self.score < self.threshold):
            raise ValueError("is_ood inconsistent with score < threshold")


def decide(field: IpfField, query, threshold: float) -> OodDecision:
    """Score one query against the field and apply the low-density rule."""
    if not np.isfinite(threshold):
        raise ValueError("threshold must be finite")
    score = float(field.evaluate(np.atleast_2d(np.asarray(query, dtype=np.float64)))[0])
    return OodDecision(score=score, threshold=float(threshold),
                       is_ood=score < threshold)


def calibrate_threshold(field: IpfField, percentile: float) -> float:
    """Percentile of psi over the field's own reference rows.

    The low-density rule needs a concrete cutoff; flagging below the p-th
    percentile of training scores flags roughly p% of in-distribution data.
    """
    if not (0.0 < percentile < 100.0):
        raise ValueError(f"percentile must lie in (0, 100), got {percentile}")
    scores = field.evaluate(field.reference)
    return float(np.percentile(scores, percentile))


def silverman_bandwidth(features) -> float:
    """Rule-of-thumb kernel width h = sigma * (4 / ((d + 2) N))^(1 / (d + 4)).

    sigma is the mean of per-dimension sample standard deviations.
    """
    data = _as_matrix(features)
    n, d = data.shape
    if n < 2:
        raise ValueError("need at least 2 rows to estimate a bandwidth")
    sigma = float(data.std(axis=0, ddof=1).mean())
    if sigma == 0.0:
        raise ValueError("zero-variance data has no usable bandwidth")
    return sigma * (4.0 / ((d + 2) * n)) ** (1.0 / (d + 4))


def sweep_bandwidth(field_ref, id_val, ood_val,
                    grid: Sequence[float]) -> tuple[float, list[tuple[float, float]]]:
    """Score validation splits at each h and pick the AUROC-maximizing width.

    Returns (best_h, table) where the table holds (h, auroc) in grid order.
    Ties go to the smallest h (the tightest field). Pairwise distances do not
    depend on h, so they are computed once per query chunk and shared.
    """
    ref = _as_matrix(field_ref)
    idv = _as_matrix(id_val)
    oodv = _as_matrix(ood_val)
    if idv.shape[1] != ref.shape[1] or oodv.shape[1] != ref.shape[1]:
        raise ValueError("reference and validation widths must agree")
    hs = [float(h) for h in grid]
    if not hs:
        raise ValueError("bandwidth grid must be nonempty")
    if any(not (np.isfinite(h) and h > 0) for h in hs):
        raise ValueError("bandwidths must be positive and finite")
    field_probe = IpfField(reference=ref, bandwidth_h=hs[0])  # input validation

    def scores_for_all_h(queries: np.ndarray) -> list[np.ndarray]:
        per_h = [np.empty(queries.shape[0]) for _ in hs]
        for qs in range(0, queries.shape[0], DEFAULT_QUERY_CHUNK):
            qblock = queries[qs:qs + DEFAULT_QUERY_CHUNK]
            parts = [cdist(qblock, ref[rs:rs + DEFAULT_REF_CHUNK], "sqeuclidean")
                     for rs in range(0, ref.shape[0], DEFAULT_REF_CHUNK)]
            d2 = np.concatenate(parts, axis=1)
            for j, h in enumerate(hs):
                per_h[j][qs:qs + DEFAULT_QUERY_CHUNK] = (
                    np.exp(-d2 / (2.0 * h * h)).mean(axis=1))
        return per_h

    id_scores = scores_for_all_h(field_probe._check_queries(idv))
    ood_scores = scores_for_all_h(field_probe._check_queries(oodv))
    table = [(h, auroc(id_scores[j], ood_scores[j])) for j, h in enumerate(hs)]
    best_auroc = max(score for _, score in table)
    best_h = min(h for h, score in table if score == best_auroc)
    return best_h, table


def write_scores_csv(scores, path, threshold: Optional[float] = None) -> None:
    """Export psi scores; with a threshold, add the 0/1 OOD decision column."""
    vals = np.asarray(scores, dtype=np.float64).ravel()
    with open(path, "w", newline="") as fh:
        if threshold is None:
            fh.write("index,psi\n")
            for i, v in enumerate(vals):
                fh.write(f"{i},{v:.17g}\n")
        else:
            fh.write("index,psi,is_ood\n")
            for i, v in enumerate(vals):
                fh.write(f"{i},{v:.17g},{int(v < threshold)}\n")
