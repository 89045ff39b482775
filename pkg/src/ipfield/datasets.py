"""Synthetic 2-D benchmark datasets: two moons and three spirals.

Each generator lays out a deterministic noiseless backbone and adds seeded
isotropic Gaussian noise from a PCG64 stream, so a given
(n_per_class, noise_std, seed) triple reproduces bit-identical data on any
platform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Viewport shared by the 2-D experiments and the heatmap grid.
VIEW_X_MIN, VIEW_X_MAX = -2.5, 3.5
VIEW_Y_MIN, VIEW_Y_MAX = -3.0, 3.0

# Three-spirals constants, frozen after checking that the noiseless arms plus
# a 4-sigma noise margin stay inside the viewport: r = SPIRAL_RATE * t over
# t in [SPIRAL_T_MIN, SPIRAL_T_MAX] (1.5 turns), arms rotated by 120 degrees.
SPIRAL_T_MIN = 1.0
SPIRAL_T_MAX = 1.0 + 3.0 * np.pi
SPIRAL_MAX_RADIUS = 2.3
SPIRAL_RATE = SPIRAL_MAX_RADIUS / SPIRAL_T_MAX


@dataclass
class LabeledDataset2D:
    """N 2-D points with integer class labels in [0, num_classes)."""

    points: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ValueError(f"points must be (N, 2), got {self.points.shape}")
        if self.labels.shape != (self.points.shape[0],):
            raise ValueError("labels length must equal point count")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("points contain non-finite values")
        if self.labels.size and (self.labels.min() < 0
                                 or self.labels.max() >= self.num_classes):
            raise ValueError("labels out of range")

    @property
    def n(self) -> int:
        return self.points.shape[0]


def _check_args(n_per_class: int, noise_std: float) -> None:
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")


def two_moons_backbone(n_per_class: int) -> tuple[np.ndarray, np.ndarray]:
    """Noiseless arcs: upper (cos t, sin t), lower (1 - cos t, 0.5 - sin t)."""
    t = np.linspace(0.0, np.pi, n_per_class)
    upper = np.column_stack([np.cos(t), np.sin(t)])
    lower = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    return upper, lower


def make_two_moons(n_per_class: int, noise_std: float, seed: int) -> LabeledDataset2D:
    """Two interlocking half-circles, ``n_per_class`` points each.

    Class 0 sits on the upper arc and class 1 on the offset lower arc, with
    i.i.d. isotropic Gaussian noise of standard deviation ``noise_std``.
    """
    _check_args(n_per_class, noise_std)
    upper, lower = two_moons_backbone(n_per_class)
    points = np.vstack([upper, lower])
    rng = np.random.default_rng(seed)
    points = points + rng.normal(0.0, noise_std, size=points.shape)
    labels = np.repeat(np.arange(2), n_per_class)
    return LabeledDataset2D(points=points, labels=labels, num_classes=2)


def three_spirals_backbone(n_per_class: int) -> list[np.ndarray]:
    """Noiseless Archimedean arms, one (n_per_class, 2) array per class."""
    t = np.linspace(SPIRAL_T_MIN, SPIRAL_T_MAX, n_per_class)
    r = SPIRAL_RATE * t
    arms = []
    for k in range(3):
        angle = t + 2.0 * np.pi * k / 3.0
        arms.append(np.column_stack([r * np.cos(angle), r * np.sin(angle)]))
    return arms


def make_three_spirals(n_per_class: int, noise_std: float, seed: int) -> LabeledDataset2D:
    """Three intertwined spiral arms at 120-degree offsets, one class per arm."""
    _check_args(n_per_class, noise_std)
    points = np.vstack(three_spirals_backbone(n_per_class))
    rng = np.random.default_rng(seed)
    points = points + rng.normal(0.0, noise_std, size=points.shape)
    labels = np.repeat(np.arange(3), n_per_class)
    return LabeledDataset2D(points=points, labels=labels, num_classes=3)


def export_csv(dataset: LabeledDataset2D, path) -> None:
    """Write ``x,y,label`` rows with 10 significant digits."""
    with open(path, "w", newline="") as fh:
        fh.write("x,y,label\n")
        for (x, y), lab in zip(dataset.points, dataset.labels):
            fh.write(f"{x:.10g},{y:.10g},{lab}\n")
