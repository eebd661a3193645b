"""Multi-scale sliding window scan.

`scan` reports every lattice window that passed at least `min_stages` stages together
with its stage count. `classic_detect` is the all-or-nothing detector: full acceptances
only, grouped by overlap.
"""
from __future__ import annotations

from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from flowtrack.cascade import CascadeModel, evaluate_windows, round_half_away
from flowtrack.imgcore import Frame, IntegralImage, integral

__all__ = ["DetectionWindow", "ScanConfig", "FaceRect", "scan_scales", "scan", "group_rectangles", "classic_detect"]


@dataclass(frozen=True)
class DetectionWindow:
    x: int
    y: int
    width: int
    height: int
    stages_passed: int

    @property
    def rect(self) -> tuple[int, int, int, int]:
        return self.x, self.y, self.width, self.height


@dataclass(frozen=True)
class FaceRect:
    """Grouped full acceptance. `neighbors` is the size of the group it came from."""

    x: int
    y: int
    width: int
    height: int
    neighbors: int

    @property
    def center(self) -> tuple[float, float]:
        return self.x + self.width / 2, self.y + self.height / 2


@dataclass(frozen=True)
class ScanConfig:
    """Scan lattice.

    Window widths run from `min_window` (default: the cascade base width) up to
    `max_window` (default: the smaller frame dimension), growing by `scale_factor`.
    The step between windows is `step_fraction` of the window width, at least one pixel.
    """

    scale_factor: float = 1.1
    step_fraction: float = 0.05
    min_window: int | None = None
    max_window: int | None = None

    def __post_init__(self):
        if self.scale_factor <= 1.0:
            raise ValueError(f"scale_factor must be greater than 1: {self.scale_factor}")
        if not 0.0 < self.step_fraction <= 1.0:
            raise ValueError(f"step_fraction must be in (0, 1]: {self.step_fraction}")
        if self.min_window is not None and self.max_window is not None and self.min_window > self.max_window:
            raise ValueError(f"min_window {self.min_window} is larger than max_window {self.max_window}")


def scan_scales(model: CascadeModel, frame_width: int, frame_height: int, cfg: ScanConfig) -> Iterator[float]:
    """Scales of the lattice, smallest first."""
    min_window = cfg.min_window if cfg.min_window is not None else model.base_width
    if min_window < model.base_width:
        raise ValueError(f"min_window {min_window} is smaller than the {model.base_width} px base window")
    max_window = cfg.max_window if cfg.max_window is not None else min(frame_width, frame_height)

    k = 0
    while True:
        scale = (min_window / model.base_width) * cfg.scale_factor**k
        width, height = model.window_size(scale)
        extent_w, extent_h = model.extent(scale)
        if max(width, height) > max_window or extent_w > frame_width or extent_h > frame_height:
            return
        yield scale
        k += 1


def _lattice_(model: CascadeModel, ii: IntegralImage, scale: float, cfg: ScanConfig) -> tuple[np.ndarray, np.ndarray]:
    width, _ = model.window_size(scale)
    extent_w, extent_h = model.extent(scale)
    step = max(1, round_half_away(cfg.step_fraction * width))
    ys, xs = np.meshgrid(
        np.arange(0, ii.height - 1 - extent_h + 1, step),
        np.arange(0, ii.width - 1 - extent_w + 1, step),
        indexing="ij",
    )
    return xs.ravel(), ys.ravel()


def scan(model: CascadeModel, frame: Frame, cfg: ScanConfig, min_stages: int) -> list[DetectionWindow]:
    """Windows of the scan lattice that passed at least `min_stages` stages.

    Ordered by scale, then row, then column.
    """
    if not 0 <= min_stages <= model.num_stages:
        raise ValueError(f"min_stages must be in [0, {model.num_stages}]: {min_stages}")

    ii = integral(frame)
    windows = []
    for scale in scan_scales(model, frame.width, frame.height, cfg):
        width, height = model.window_size(scale)
        xs, ys = _lattice_(model, ii, scale, cfg)
        passed = evaluate_windows(model, ii, xs, ys, scale)
        for i in np.flatnonzero(passed >= min_stages):
            windows.append(DetectionWindow(int(xs[i]), int(ys[i]), width, height, int(passed[i])))
    return windows


def _neighbors_(rects: np.ndarray) -> np.ndarray:
    x, y, w, h = (rects[:, i, None] for i in range(4))
    xt, yt, wt, ht = (rects[None, :, i] for i in range(4))
    min_w = np.minimum(w, wt) * 0.2
    min_h = np.minimum(h, ht) * 0.2
    return (
        (np.abs(w - wt) <= min_w)
        & (np.abs(h - ht) <= min_h)
        & (np.abs(x - xt) <= min_w)
        & (np.abs(y - yt) <= min_h)
    )


def group_rectangles(rects: list[tuple[int, int, int, int]], min_neighbors: int) -> list[FaceRect]:
    """Cluster rectangles by similarity and average each cluster.

    Two rectangles are similar when width, height and corner offsets each differ by at
    most 20% of the smaller rectangle's width (or height). Clusters are the connected
    components of that relation, so the result doesn't depend on input order. Clusters
    with fewer than `min_neighbors + 1` members are dropped.
    """
    if min_neighbors < 0:
        raise ValueError(f"min_neighbors must be non negative: {min_neighbors}")
    if len(rects) == 0:
        return []

    data = np.array(rects, dtype=np.float64)
    count, labels = connected_components(csr_matrix(_neighbors_(data)), directed=False)

    faces = []
    for label in range(count):
        members = data[labels == label]
        if members.shape[0] < min_neighbors + 1:
            continue
        # sorted so the float mean is independent of input order
        members = members[np.lexsort(members.T[::-1])]
        x, y, w, h = (round_half_away(v) for v in members.mean(axis=0))
        faces.append(FaceRect(x, y, w, h, int(members.shape[0])))
    faces.sort(key=lambda face: (face.y, face.x, face.width, face.height))
    return faces


def classic_detect(model: CascadeModel, frame: Frame, cfg: ScanConfig, min_neighbors: int = 3) -> list[FaceRect]:
    """Per frame detection: full acceptances only, grouped by overlap."""
    accepted = scan(model, frame, cfg, model.num_stages)
    return group_rectangles([window.rect for window in accepted], min_neighbors)
