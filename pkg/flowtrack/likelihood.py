"""Likelihood maps.

A refresh map is built by adding each gated detection window's stage count to every
pixel of the window shrunk about its center. Maps are blended with the flow-warped
previous map, and faces are read back out by thresholding, 8-connected labelling and
stretching each component's bounding box by the inverse shrink factor about its centroid.
"""
from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np
from scipy import ndimage

from flowtrack.cascade import round_half_away
from flowtrack.detector import DetectionWindow
from flowtrack.imgcore import DimensionError

__all__ = [
    "LikelihoodMap",
    "FaceBox",
    "MIN_COMPONENT_AREA",
    "shrink_rects",
    "shrink_rect",
    "build_refresh_map",
    "blend",
    "extract_faces",
    "write_map_pgm",
]

MIN_COMPONENT_AREA = 9
EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class LikelihoodMap:
    """Per pixel float32 accumulation of stage counts, shape (height, width)."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 2:
            raise DimensionError(f"Expected a 2D map: {values.ndim} dimensions found")
        if not np.isfinite(values).all() or values.min(initial=0.0) < 0:
            raise ValueError("Likelihood values must be finite and non negative")
        object.__setattr__(self, "values", values)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def peak(self) -> float:
        return float(self.values.max(initial=0.0))

    @classmethod
    def zeros(cls, width: int, height: int) -> LikelihoodMap:
        return cls(np.zeros((height, width), dtype=np.float32))


@dataclass(frozen=True)
class FaceBox:
    """Face center and box size. `left` and `top` place the box when it isn't centered on the face."""

    center_x: float
    center_y: float
    width: int
    height: int
    peak: float
    left: int | None = None
    top: int | None = None

    @property
    def rect(self) -> tuple[int, int, int, int]:
        if self.left is not None and self.top is not None:
            return self.left, self.top, self.width, self.height
        return (
            round_half_away(self.center_x - self.width / 2),
            round_half_away(self.center_y - self.height / 2),
            self.width,
            self.height,
        )


def shrink_rects(rects: np.ndarray, shrink: float) -> np.ndarray:
    """(n, 4) `x y w h` rectangles scaled by `shrink` about their centers, sizes at least one pixel."""
    x, y, w, h = np.asarray(rects, dtype=np.float64).reshape(-1, 4).T
    # sizes are positive so flooring at +0.5 rounds halves away from zero
    sw = np.maximum(1.0, np.floor(w * shrink + 0.5))
    sh = np.maximum(1.0, np.floor(h * shrink + 0.5))
    x0 = x + np.floor((w - sw) / 2 + 0.5)
    y0 = y + np.floor((h - sh) / 2 + 0.5)
    return np.stack([x0, y0, sw, sh], axis=1).astype(np.int64)


def shrink_rect(window: DetectionWindow, shrink: float) -> tuple[int, int, int, int]:
    """Window rectangle scaled by `shrink` about its center, as (x, y, w, h)."""
    x, y, w, h = shrink_rects(np.array([window.rect]), shrink)[0]
    return int(x), int(y), int(w), int(h)


def build_refresh_map(
    windows: Iterable[DetectionWindow],
    frame_width: int,
    frame_height: int,
    tau: int,
    shrink: float,
) -> LikelihoodMap:
    """Sum the stage counts of windows with at least `tau` passed stages over their shrunk rectangles.

    Counts are integers, so the accumulation is exact and independent of window order.
    """
    if not 0.0 < shrink <= 1.0:
        raise ValueError(f"shrink must be in (0, 1]: {shrink}")

    gated = [window for window in windows if window.stages_passed >= tau]
    diff = np.zeros((frame_height + 1, frame_width + 1), dtype=np.int64)
    if len(gated) > 0:
        x0, y0, sw, sh = shrink_rects(np.array([window.rect for window in gated]), shrink).T
        value = np.array([window.stages_passed for window in gated], dtype=np.int64)
        x1 = np.minimum(frame_width, x0 + sw)
        y1 = np.minimum(frame_height, y0 + sh)
        x0 = np.maximum(0, x0)
        y0 = np.maximum(0, y0)
        keep = (x0 < x1) & (y0 < y1)
        x0, y0, x1, y1, value = (v[keep] for v in (x0, y0, x1, y1, value))

        # 2D difference table, integrated once at the end
        np.add.at(diff, (y0, x0), value)
        np.add.at(diff, (y0, x1), -value)
        np.add.at(diff, (y1, x0), -value)
        np.add.at(diff, (y1, x1), value)

    values = diff.cumsum(axis=0).cumsum(axis=1)[:frame_height, :frame_width]
    return LikelihoodMap(values.astype(np.float32))


def blend(refresh: LikelihoodMap, warped_prev: LikelihoodMap, alpha: float) -> LikelihoodMap:
    """`(1 - alpha) * refresh + alpha * warped_prev`, per pixel."""
    if refresh.shape != warped_prev.shape:
        raise DimensionError(f"Maps differ in shape: {refresh.shape} vs {warped_prev.shape}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1]: {alpha}")
    if alpha == 0.0:
        return LikelihoodMap(refresh.values.copy())
    if alpha == 1.0:
        return LikelihoodMap(warped_prev.values.copy())

    base = refresh.values.astype(np.float64)
    mixed = base + alpha * (warped_prev.values.astype(np.float64) - base)
    return LikelihoodMap(np.maximum(mixed, 0.0).astype(np.float32))


def extract_faces(
    likelihood: LikelihoodMap,
    c: float,
    shrink: float,
    min_area: int = MIN_COMPONENT_AREA,
) -> list[FaceBox]:
    """Faces as the 8-connected components of `values >= c`.

    Centers are component centroids in continuous pixel coordinates (pixel `i` spans
    `[i, i + 1)`). Sizes are the bounding box stretched by `1 / shrink` about the centroid
    and clipped to the frame, so boxes at the border are no longer centered.
    Components smaller than `min_area` pixels are dropped.
    Sorted by descending peak value.
    """
    if c <= 0:
        raise ValueError(f"Binarization threshold must be positive: {c}")

    values = likelihood.values
    mask = values >= c
    labels, count = ndimage.label(mask, structure=EIGHT_CONNECTED)
    if count == 0:
        return []

    index = np.arange(1, count + 1)
    areas = ndimage.sum_labels(mask, labels, index)
    centers = ndimage.center_of_mass(mask, labels, index)
    peaks = ndimage.maximum(values, labels, index)
    boxes = ndimage.find_objects(labels)

    faces = []
    for area, (cy, cx), peak, (rows, cols) in zip(areas, centers, peaks, boxes):
        if area < min_area:
            continue
        cx, cy = cx + 0.5, cy + 0.5
        half_w = (cols.stop - cols.start) / shrink / 2
        half_h = (rows.stop - rows.start) / shrink / 2
        left = min(round_half_away(max(0.0, cx - half_w)), likelihood.width - 1)
        top = min(round_half_away(max(0.0, cy - half_h)), likelihood.height - 1)
        right = round_half_away(min(likelihood.width, cx + half_w))
        bottom = round_half_away(min(likelihood.height, cy + half_h))
        faces.append(
            FaceBox(
                float(cx),
                float(cy),
                max(1, right - left),
                max(1, bottom - top),
                float(peak),
                left,
                top,
            ),
        )
    faces.sort(key=lambda face: (-face.peak, face.center_y, face.center_x))
    return faces


def write_map_pgm(path: str | Path, likelihood: LikelihoodMap):
    """8-bit PGM of the map with [0, max] rescaled to [0, 255]."""
    peak = likelihood.peak
    if peak > 0:
        image = np.rint(likelihood.values / peak * 255.0).astype(np.uint8)
    else:
        image = np.zeros(likelihood.shape, dtype=np.uint8)
    if not cv2.imwrite(str(path), image):
        raise OSError(f"Failed to write {path}")
