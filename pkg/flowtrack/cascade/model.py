"""Cascade model types and per-window evaluation.

A window is evaluated stage by stage. Each weak classifier computes an MB-LBP code,
looks the code up in its 256 bit table and adds `left` when the bit is set, `right`
otherwise. A stage passes when the sum is at least its threshold less `THRESHOLD_EPS`,
the tolerance the xml schema's own detector applies when it loads a cascade. Evaluation stops
at the first failing stage and the number of passed stages (the reject level) is
returned instead of a yes/no verdict.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from flowtrack.imgcore import DimensionError, IntegralImage

__all__ = [
    "CascadeFormatError",
    "UnsupportedFeatureError",
    "MBLBPFeature",
    "WeakClassifier",
    "Stage",
    "CascadeModel",
    "THRESHOLD_EPS",
    "round_half_away",
    "lbp_code",
    "evaluate_window",
    "evaluate_windows",
]

# (row, col, bit) of the eight neighbor blocks, clockwise from the top-left block
NEIGHBORS = (
    (0, 0, 7),
    (0, 1, 6),
    (0, 2, 5),
    (1, 2, 4),
    (2, 2, 3),
    (2, 1, 2),
    (2, 0, 1),
    (1, 0, 0),
)

THRESHOLD_EPS = 1e-5


class CascadeFormatError(ValueError):
    """A cascade file couldn't be parsed.

    `offset` is the byte offset for native files, `path` the element path for xml files.
    """

    def __init__(self, message: str, *, offset: int | None = None, path: str | None = None, stage: int | None = None):
        self.offset = offset
        self.path = path
        self.stage = stage
        where = []
        if stage is not None:
            where.append(f"stage {stage}")
        if offset is not None:
            where.append(f"byte {offset}")
        if path is not None:
            where.append(path)
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class UnsupportedFeatureError(ValueError):
    """The cascade uses a feature type other than LBP."""

    def __init__(self, feature_type: str):
        self.feature_type = feature_type
        super().__init__(f"Unsupported cascade feature type: {feature_type!r}, only LBP is supported")


def round_half_away(value: float) -> int:
    """Round to the nearest integer, halves away from zero."""
    return int(math.copysign(math.floor(abs(value) + 0.5), value))


@dataclass(frozen=True)
class MBLBPFeature:
    """Top-left block of a 3x3 grid of equally sized blocks, in window coordinates."""

    x: int
    y: int
    block_width: int
    block_height: int

    def __post_init__(self):
        for name in ("x", "y", "block_width", "block_height"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.x < 0 or self.y < 0:
            raise ValueError(f"Feature origin must be non negative: ({self.x}, {self.y})")
        if self.block_width < 1 or self.block_height < 1:
            raise ValueError(f"Feature blocks must be at least 1x1: {self.block_width}x{self.block_height}")

    @property
    def right(self) -> int:
        return self.x + 3 * self.block_width

    @property
    def bottom(self) -> int:
        return self.y + 3 * self.block_height

    def fits(self, width: int, height: int) -> bool:
        return self.right <= width and self.bottom <= height

    def scaled(self, scale: float) -> MBLBPFeature:
        if scale == 1.0:
            return self
        return MBLBPFeature(
            round_half_away(self.x * scale),
            round_half_away(self.y * scale),
            max(1, round_half_away(self.block_width * scale)),
            max(1, round_half_away(self.block_height * scale)),
        )


@dataclass(frozen=True)
class WeakClassifier:
    """Categorical stump over LBP codes. Bit `c` of `lut` selects `left` for code `c`."""

    feature: MBLBPFeature
    lut: int
    left: float
    right: float

    def __post_init__(self):
        object.__setattr__(self, "lut", int(self.lut))
        object.__setattr__(self, "left", float(self.left))
        object.__setattr__(self, "right", float(self.right))
        if not 0 <= self.lut < 1 << 256:
            raise ValueError("LUT must hold exactly 256 bits")

    def selects_left(self, code: int) -> bool:
        return bool((self.lut >> code) & 1)

    def lut_bits(self) -> np.ndarray:
        return np.array([(self.lut >> code) & 1 for code in range(256)], dtype=bool)


@dataclass(frozen=True)
class Stage:
    weak: tuple[WeakClassifier, ...]
    threshold: float

    def __post_init__(self):
        object.__setattr__(self, "weak", tuple(self.weak))
        object.__setattr__(self, "threshold", float(self.threshold))
        if len(self.weak) == 0:
            raise ValueError("A stage needs at least one weak classifier")


@dataclass(frozen=True)
class _CompiledStage:
    rects: np.ndarray
    luts: np.ndarray
    left: np.ndarray
    right: np.ndarray
    threshold: float


@dataclass(frozen=True)
class CascadeModel:
    """Staged MB-LBP classifier. Immutable once built."""

    base_width: int
    base_height: int
    stages: tuple[Stage, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        if self.base_width < 1 or self.base_height < 1:
            raise ValueError(f"Base window must be at least 1x1: {self.base_width}x{self.base_height}")
        if len(self.stages) == 0:
            raise ValueError("A cascade needs at least one stage")
        for index, stage in enumerate(self.stages):
            for weak in stage.weak:
                if not weak.feature.fits(self.base_width, self.base_height):
                    raise ValueError(
                        f"Feature {weak.feature} of stage {index} exceeds the "
                        f"{self.base_width}x{self.base_height} base window",
                    )

    @property
    def num_stages(self) -> int:
        return len(self.stages)

    def window_size(self, scale: float) -> tuple[int, int]:
        return round_half_away(self.base_width * scale), round_half_away(self.base_height * scale)

    def extent(self, scale: float) -> tuple[int, int]:
        """Pixels covered at `scale` by the window and every scaled feature grid."""
        width, height = self.window_size(scale)
        for stage in self.stages:
            for weak in stage.weak:
                feature = weak.feature.scaled(scale)
                width = max(width, feature.right)
                height = max(height, feature.bottom)
        return width, height

    @cached_property
    def _compiled_(self) -> tuple[_CompiledStage, ...]:
        compiled = []
        for stage in self.stages:
            compiled.append(
                _CompiledStage(
                    rects=np.array(
                        [(w.feature.x, w.feature.y, w.feature.block_width, w.feature.block_height) for w in stage.weak],
                        dtype=np.int64,
                    ),
                    luts=np.stack([w.lut_bits() for w in stage.weak]),
                    left=np.array([w.left for w in stage.weak], dtype=np.float64),
                    right=np.array([w.right for w in stage.weak], dtype=np.float64),
                    threshold=stage.threshold - THRESHOLD_EPS,
                ),
            )
        return tuple(compiled)


def _check_window_(model: CascadeModel, ii: IntegralImage, xs: np.ndarray, ys: np.ndarray, scale: float):
    width, height = model.extent(scale)
    image_w, image_h = ii.width - 1, ii.height - 1
    if xs.size == 0:
        return
    if xs.min() < 0 or ys.min() < 0 or xs.max() + width > image_w or ys.max() + height > image_h:
        raise DimensionError(
            f"Window of {width}x{height} at scale {scale} falls outside the {image_w}x{image_h} image",
        )


def lbp_code(ii: IntegralImage, feature: MBLBPFeature, offset_x: int, offset_y: int, scale: float = 1.0) -> int:
    """MB-LBP code of `feature` scaled by `scale` in the window at (offset_x, offset_y).

    Bit i is set when the neighbor block's sum is at least the center block's sum,
    bits 7..0 running clockwise from the top-left block and ending at the middle-left block.
    """
    scaled = feature.scaled(scale)
    x = offset_x + scaled.x
    y = offset_y + scaled.y
    bw, bh = scaled.block_width, scaled.block_height
    if x < 0 or y < 0 or x + 3 * bw > ii.width - 1 or y + 3 * bh > ii.height - 1:
        raise DimensionError(f"Feature grid at ({x}, {y}) falls outside the image")

    center = ii.rect_sum(x + bw, y + bh, bw, bh)
    code = 0
    for row, col, bit in NEIGHBORS:
        if ii.rect_sum(x + col * bw, y + row * bh, bw, bh) >= center:
            code |= 1 << bit
    return code


def _block_sums_(table: np.ndarray, bw: int, bh: int) -> np.ndarray:
    """Sum of the `bw` x `bh` block with its top-left corner at every pixel."""
    return table[bh:, bw:] - table[:-bh, bw:] - table[bh:, :-bw] + table[:-bh, :-bw]


def _block_codes_(sums: np.ndarray, xs: np.ndarray, ys: np.ndarray, rect: tuple[int, int, int, int]) -> np.ndarray:
    fx, fy, bw, bh = rect
    flat = sums.ravel()
    stride = sums.shape[1]
    base = (ys + fy) * stride + xs + fx
    center = flat[base + bh * stride + bw]
    codes = np.zeros(xs.size, dtype=np.int64)
    for row, col, bit in NEIGHBORS:
        codes |= (flat[base + row * bh * stride + col * bw] >= center).astype(np.int64) << bit
    return codes


def _codes_(table: np.ndarray, stride: int, xs: np.ndarray, ys: np.ndarray, rect: tuple[int, int, int, int]) -> np.ndarray:
    fx, fy, bw, bh = rect
    corners = np.empty((4, 4, xs.size), dtype=np.int64)
    for i in range(4):
        row = (ys + fy + i * bh) * stride + xs + fx
        for j in range(4):
            corners[i, j] = table[row + j * bw]
    sums = corners[1:, 1:] - corners[:-1, 1:] - corners[1:, :-1] + corners[:-1, :-1]
    center = sums[1, 1]
    codes = np.zeros(xs.size, dtype=np.int64)
    for row, col, bit in NEIGHBORS:
        codes |= (sums[row, col] >= center).astype(np.int64) << bit
    return codes


def evaluate_windows(
    model: CascadeModel,
    ii: IntegralImage,
    xs: np.ndarray,
    ys: np.ndarray,
    scale: float = 1.0,
) -> np.ndarray:
    """Stages passed by every window with top-left corners (xs[i], ys[i]) at `scale`.

    Windows are dropped from evaluation at their first failing stage. While many windows
    are active, block sums are computed once per block size over the whole image.
    """
    xs = np.asarray(xs, dtype=np.int64).ravel()
    ys = np.asarray(ys, dtype=np.int64).ravel()
    if xs.shape != ys.shape:
        raise DimensionError(f"Got {xs.size} x positions and {ys.size} y positions")
    _check_window_(model, ii, xs, ys, scale)

    table = ii.data.view(np.int64)
    flat = table.ravel()
    stride = ii.width
    block_sums: dict[tuple[int, int], np.ndarray] = {}
    passed = np.zeros(xs.size, dtype=np.int64)
    active = np.arange(xs.size)

    for index, stage in enumerate(model._compiled_):
        if active.size == 0:
            break
        ax, ay = xs[active], ys[active]
        total = np.zeros(active.size, dtype=np.float64)
        dense = active.size * 8 >= table.size
        for k in range(stage.rects.shape[0]):
            rect = tuple(int(v) for v in stage.rects[k])
            if scale != 1.0:
                scaled = MBLBPFeature(*rect).scaled(scale)
                rect = (scaled.x, scaled.y, scaled.block_width, scaled.block_height)
            if dense:
                size = rect[2], rect[3]
                if size not in block_sums:
                    block_sums[size] = _block_sums_(table, *size)
                codes = _block_codes_(block_sums[size], ax, ay, rect)
            else:
                codes = _codes_(flat, stride, ax, ay, rect)
            total += np.where(stage.luts[k][codes], stage.left[k], stage.right[k])
        active = active[total >= stage.threshold]
        passed[active] = index + 1
    return passed


def evaluate_window(model: CascadeModel, ii: IntegralImage, x: int, y: int, scale: float = 1.0) -> int:
    """Stages passed by a single window. `num_stages` means the window is a full acceptance."""
    return int(evaluate_windows(model, ii, np.array([x]), np.array([y]), scale)[0])
