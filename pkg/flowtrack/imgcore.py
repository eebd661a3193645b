"""Grayscale frames, integral images, bilinear sampling and flow warping.

Arrays are row-major numpy arrays indexed `[y, x]`. Likelihood maps and flow
fields are float32; integral images use uint64 accumulators.

Warp direction and border mode are interpretation: the output of `warp_by_flow`
samples the source at `p + flow(p)` (backward warping) and everything outside
the grid reads as zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

__all__ = [
    "DimensionError",
    "Frame",
    "IntegralImage",
    "FlowField",
    "integral",
    "bilinear_sample",
    "bilinear_sample_grid",
    "warp_by_flow",
    "luma",
]


class DimensionError(ValueError):
    """Arrays that must share a shape don't, or a window falls outside an image."""


@dataclass(frozen=True)
class Frame:
    """8-bit grayscale frame. `data` has shape (height, width)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise ValueError(f"Expected a 2D grayscale array: {data.ndim} dimensions found")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"Frame must be at least 1x1: {data.shape[1]}x{data.shape[0]}")
        if data.dtype != np.uint8:
            if data.min(initial=0) < 0 or data.max(initial=0) > 255:
                raise ValueError("Frame intensities must be in [0, 255]")
            data = data.astype(np.uint8)
        object.__setattr__(self, "data", np.ascontiguousarray(data))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True)
class IntegralImage:
    """Summed-area table with a leading zero row and column.

    `data[y, x]` is the sum of all intensities in `[0, x) x [0, y)`.
    """

    data: np.ndarray

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def rect_sum(self, x: int, y: int, w: int, h: int) -> int:
        s = self.data
        return int(
            np.int64(s[y + h, x + w])
            - np.int64(s[y, x + w])
            - np.int64(s[y + h, x])
            + np.int64(s[y, x]),
        )


@dataclass(frozen=True)
class FlowField:
    """Per pixel displacement. `dx` and `dy` are float32 arrays of shape (height, width)."""

    dx: np.ndarray
    dy: np.ndarray

    def __post_init__(self):
        dx = np.asarray(self.dx, dtype=np.float32)
        dy = np.asarray(self.dy, dtype=np.float32)
        if dx.shape != dy.shape or dx.ndim != 2:
            raise DimensionError(f"Flow components differ in shape: {dx.shape} vs {dy.shape}")
        if not (np.isfinite(dx).all() and np.isfinite(dy).all()):
            raise ValueError("Flow values must be finite")
        object.__setattr__(self, "dx", dx)
        object.__setattr__(self, "dy", dy)

    @property
    def width(self) -> int:
        return self.dx.shape[1]

    @property
    def height(self) -> int:
        return self.dx.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.dx.shape

    @classmethod
    def zeros(cls, width: int, height: int) -> FlowField:
        return cls(
            np.zeros((height, width), dtype=np.float32),
            np.zeros((height, width), dtype=np.float32),
        )


def luma(rgb: np.ndarray) -> np.ndarray:
    """Integer luma of an (h, w, 3) RGB array: (299r + 587g + 114b + 500) / 1000, truncated."""
    rgb = rgb.astype(np.int64)
    y = (299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2] + 500) // 1000
    return y.astype(np.uint8)


def integral(frame: Frame) -> IntegralImage:
    data = np.zeros((frame.height + 1, frame.width + 1), dtype=np.uint64)
    data[1:, 1:] = frame.data.astype(np.uint64).cumsum(axis=0).cumsum(axis=1)
    return IntegralImage(data)


def bilinear_sample_grid(grid: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample `grid` at many real coordinates with bilinear interpolation.

    Taps outside the grid read as zero. Interpolation runs in float64 and the
    result has the shape of `xs`.
    """
    grid = np.asarray(grid)
    h, w = grid.shape
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)

    x0 = np.floor(xs)
    y0 = np.floor(ys)
    fx = xs - x0
    fy = ys - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)

    def tap(ty: np.ndarray, tx: np.ndarray) -> np.ndarray:
        inside = (tx >= 0) & (tx < w) & (ty >= 0) & (ty < h)
        values = np.zeros(tx.shape, dtype=np.float64)
        values[inside] = grid[ty[inside], tx[inside]]
        return values

    top = (1.0 - fx) * tap(y0, x0) + fx * tap(y0, x0 + 1)
    bottom = (1.0 - fx) * tap(y0 + 1, x0) + fx * tap(y0 + 1, x0 + 1)
    return (1.0 - fy) * top + fy * bottom


def bilinear_sample(grid: np.ndarray, x: float, y: float) -> float:
    """Bilinear value of `grid` at (x, y); zero outside the grid."""
    return float(bilinear_sample_grid(grid, np.array([x]), np.array([y]))[0])


def warp_by_flow(grid: np.ndarray, flow: FlowField) -> np.ndarray:
    """Backward warp: `output[y, x] = bilinear_sample(grid, x + dx, y + dy)`.

    Interpolation weights are quantized to 1/32 px.
    """
    grid = np.asarray(grid, dtype=np.float32)
    if grid.shape != flow.shape:
        raise DimensionError(f"Map {grid.shape} and flow {flow.shape} differ in shape")

    h, w = grid.shape
    map_x = np.arange(w, dtype=np.float32)[None, :] + flow.dx
    map_y = np.arange(h, dtype=np.float32)[:, None] + flow.dy
    return cv2.remap(grid, map_x, map_y, cv2.INTER_LINEAR, borderMode=cv2.BORDER_CONSTANT, borderValue=0)

