"""Uncertainty maps over the fixed 2-D viewport grid.

The viewport is sampled at 100 x-values in [-2.5, 3.5] and 100 y-values in
[-3, 3]. In feature-space mode every grid point is pushed through the model
before scoring; in input-space mode the raw coordinates are scored directly.
Rendering emits a binary grayscale PGM (P5) plus a CSV of raw psi values so
any plotting tool can apply its own palette.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .datasets import VIEW_X_MAX, VIEW_X_MIN, VIEW_Y_MAX, VIEW_Y_MIN
from .field import IpfField
from .net import SnMlp, forward

GRID_SIZE = 100
MODE_FEATURE = "feature"
MODE_INPUT = "input"


@dataclass
class UncertaintyGrid:
    """psi over the viewport; psi[iy, ix] pairs y_values[iy] with x_values[ix]."""

    x_values: np.ndarray
    y_values: np.ndarray
    psi: np.ndarray
    mode: str

    def __post_init__(self):
        self.x_values = np.asarray(self.x_values, dtype=np.float64)
        self.y_values = np.asarray(self.y_values, dtype=np.float64)
        self.psi = np.asarray(self.psi, dtype=np.float64)
        if self.x_values.shape != (GRID_SIZE,) or self.y_values.shape != (GRID_SIZE,):
            raise ValueError("grid axes must have exactly 100 values")
        if self.psi.shape != (GRID_SIZE, GRID_SIZE):
            raise ValueError(f"psi must be 100x100, got {self.psi.shape}")
        if not np.all(np.isfinite(self.psi)):
            raise ValueError("psi contains non-finite values")
        if self.mode not in (MODE_FEATURE, MODE_INPUT):
            raise ValueError(f"unknown mode {self.mode!r}")

    def normalized_uncertainty(self) -> np.ndarray:
        """1 - psi / max(psi); the quantity the rendering encodes."""
        peak = self.psi.max()
        if peak == 0.0:
            return np.ones_like(self.psi)
        return 1.0 - self.psi / peak


def grid_axes() -> tuple[np.ndarray, np.ndarray]:
    xs = np.linspace(VIEW_X_MIN, VIEW_X_MAX, GRID_SIZE)
    ys = np.linspace(VIEW_Y_MIN, VIEW_Y_MAX, GRID_SIZE)
    return xs, ys


def grid_points() -> np.ndarray:
    """All 10,000 viewport coordinates, ordered y-major to match psi layout."""
    xs, ys = grid_axes()
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def build_grid(field: IpfField, model: Optional[SnMlp], mode: str) -> UncertaintyGrid:
    """Evaluate psi over the viewport in the requested mode."""
    if mode not in (MODE_FEATURE, MODE_INPUT):
        raise ValueError(f"mode must be '{MODE_FEATURE}' or '{MODE_INPUT}'")
    pts = grid_points()
    if mode == MODE_INPUT:
        if field.dim != 2:
            raise ValueError("input-space mode requires a 2-D field")
        queries = pts
    else:
        if model is None:
            raise ValueError("feature-space mode requires a model")
        if model.input_dim != 2:
            raise ValueError("feature-space mode requires a 2-D-input model")
        if model.hidden_dim != field.dim:
            raise ValueError(
                f"model feature width {model.hidden_dim} != field width {field.dim}")
        queries, _ = forward(model, pts)
    psi = field.evaluate(queries).reshape(GRID_SIZE, GRID_SIZE)
    xs, ys = grid_axes()
    return UncertaintyGrid(x_values=xs, y_values=ys, psi=psi, mode=mode)


def cell_indices(points) -> tuple[np.ndarray, np.ndarray]:
    """Nearest (iy, ix) grid cell for each 2-D point, clipped to the viewport."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"points must be (N, 2), got {pts.shape}")
    dx = (VIEW_X_MAX - VIEW_X_MIN) / (GRID_SIZE - 1)
    dy = (VIEW_Y_MAX - VIEW_Y_MIN) / (GRID_SIZE - 1)
    ix = np.clip(np.rint((pts[:, 0] - VIEW_X_MIN) / dx), 0, GRID_SIZE - 1)
    iy = np.clip(np.rint((pts[:, 1] - VIEW_Y_MIN) / dy), 0, GRID_SIZE - 1)
    return iy.astype(np.int64), ix.astype(np.int64)


def render(grid: UncertaintyGrid, path) -> Path:
    """Write a P5 grayscale image and a sibling ``.csv`` of raw psi values.

    Pixel value is round(255 * psi / max psi), so dark means high uncertainty.
    Image rows run top-down (row 0 is the maximum y); the CSV runs in
    ascending y-major order with columns ``x,y,psi``.
    """
    path = Path(path)
    peak = grid.psi.max()
    scaled = np.zeros_like(grid.psi) if peak == 0.0 else grid.psi / peak
    pixels = np.rint(255.0 * scaled).astype(np.uint8)
    header = f"P5\n{GRID_SIZE} {GRID_SIZE}\n255\n".encode("ascii")
    path.write_bytes(header + pixels[::-1, :].tobytes())
    csv_path = path.with_suffix(".csv")
    with open(csv_path, "w", newline="") as fh:
        fh.write("x,y,psi\n")
        for iy in range(GRID_SIZE):
            y = grid.y_values[iy]
            for ix in range(GRID_SIZE):
                fh.write(f"{grid.x_values[ix]:.17g},{y:.17g},{grid.psi[iy, ix]:.17g}\n")
    return path
