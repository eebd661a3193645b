"""Dense two-frame optical flow by polynomial expansion.

Every pixel's neighborhood is approximated by a quadratic
`f(d) ~ c + b^T d + d^T A d` fitted with Gaussian weights. Between two frames the
displacement follows from how `b` changes under a shift of a shared `A`; constraints
are averaged over a box window and solved per pixel, refining coarse to fine over an
image pyramid.

The returned field maps `prev` coordinates into `next`: `prev(p) ~ next(p + flow(p))`.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cache
from pathlib import Path

import cv2
import numpy as np

from flowtrack.imgcore import DimensionError, FlowField, Frame

__all__ = [
    "FlowParams",
    "PolyExpansion",
    "poly_expand",
    "compute_flow",
    "write_flo",
    "read_flo",
]

MIN_LEVEL_SIZE = 32
SOLVE_EPS = 1e-5
FLO_MAGIC = b"FLOW"


@dataclass(frozen=True)
class FlowParams:
    pyramid_scale: float = 0.5
    levels: int = 3
    window_size: int = 15
    iterations: int = 3
    poly_n: int = 5
    poly_sigma: float = 1.1

    def __post_init__(self):
        if not 0.0 < self.pyramid_scale < 1.0:
            raise ValueError(f"pyramid_scale must be in (0, 1): {self.pyramid_scale}")
        if self.levels < 1 or self.iterations < 1:
            raise ValueError("levels and iterations must be at least 1")
        if self.window_size < 3 or self.window_size % 2 == 0:
            raise ValueError(f"window_size must be odd and at least 3: {self.window_size}")
        if self.poly_n not in (5, 7):
            raise ValueError(f"poly_n must be 5 or 7: {self.poly_n}")
        if self.poly_sigma <= 0:
            raise ValueError(f"poly_sigma must be positive: {self.poly_sigma}")


@dataclass(frozen=True)
class PolyExpansion:
    """Per pixel quadratic coefficients.

    `f(x, y) ~ c + bx*x + by*y + axx*x^2 + ayy*y^2 + axy*x*y` around each pixel,
    x to the right and y down.
    """

    c: np.ndarray
    bx: np.ndarray
    by: np.ndarray
    axx: np.ndarray
    ayy: np.ndarray
    axy: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.c.shape


@cache
def _basis_(poly_n: int, poly_sigma: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    half = poly_n // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(x * x) / (2.0 * poly_sigma * poly_sigma))
    g /= g.sum()

    weights = np.outer(g, g).ravel()
    yy, xx = np.meshgrid(x, x, indexing="ij")
    xx, yy = xx.ravel(), yy.ravel()
    basis = np.stack([np.ones_like(xx), xx, yy, xx * xx, yy * yy, xx * yy])
    gram = (basis * weights) @ basis.T
    return g, x * g, x * x * g, np.linalg.inv(gram)


def _expand_(image: np.ndarray, poly_n: int, poly_sigma: float) -> PolyExpansion:
    g, xg, xxg, inverse = _basis_(poly_n, poly_sigma)

    # separable weighted moments, edges replicated; kernels are (along x, along y)
    kernels = ((g, g), (xg, g), (g, xg), (xxg, g), (g, xxg), (xg, xg))
    moments = np.stack(
        [
            cv2.sepFilter2D(image, cv2.CV_64F, kx, ky, borderType=cv2.BORDER_REPLICATE)
            for kx, ky in kernels
        ],
    )
    coeffs = np.einsum("ij,jhw->ihw", inverse, moments)
    return PolyExpansion(*coeffs)


def poly_expand(frame: Frame, poly_n: int = 5, poly_sigma: float = 1.1) -> PolyExpansion:
    """Weighted least squares quadratic fit over the `poly_n` x `poly_n` neighborhood of every pixel."""
    if frame.width < poly_n or frame.height < poly_n:
        raise DimensionError(f"Frame {frame.width}x{frame.height} is smaller than the {poly_n}x{poly_n} neighborhood")
    return _expand_(frame.data.astype(np.float64), poly_n, poly_sigma)


def _pyramid_(image: np.ndarray, params: FlowParams) -> list[np.ndarray]:
    h, w = image.shape
    levels = [image]
    for k in range(1, params.levels):
        scale = params.pyramid_scale**k
        size = (round(w * scale), round(h * scale))
        if min(size) < max(MIN_LEVEL_SIZE, params.poly_n):
            break
        sigma = (1.0 / scale - 1.0) * 0.5
        ksize = max(3, round(sigma * 5) | 1)
        blurred = cv2.GaussianBlur(image, (ksize, ksize), sigma, sigmaY=sigma, borderType=cv2.BORDER_REPLICATE)
        levels.append(cv2.resize(blurred, size, interpolation=cv2.INTER_LINEAR))
    return levels


def _box_(values: np.ndarray, window: int) -> np.ndarray:
    return cv2.boxFilter(values, cv2.CV_64F, (window, window), normalize=True, borderType=cv2.BORDER_REPLICATE)


def _update_(r0: PolyExpansion, r1: PolyExpansion, dx: np.ndarray, dy: np.ndarray, grid: tuple[np.ndarray, np.ndarray], window: int):
    map_x = (grid[0] + dx).astype(np.float32)
    map_y = (grid[1] + dy).astype(np.float32)

    def sample(field: np.ndarray) -> np.ndarray:
        return cv2.remap(field, map_x, map_y, cv2.INTER_LINEAR, borderMode=cv2.BORDER_REPLICATE)

    a11 = (r0.axx + sample(r1.axx)) * 0.5
    a22 = (r0.ayy + sample(r1.ayy)) * 0.5
    a12 = (r0.axy + sample(r1.axy)) * 0.25
    db1 = -0.5 * (sample(r1.bx) - r0.bx) + a11 * dx + a12 * dy
    db2 = -0.5 * (sample(r1.by) - r0.by) + a12 * dx + a22 * dy

    g11 = _box_(a11 * a11 + a12 * a12, window)
    g12 = _box_(a12 * (a11 + a22), window)
    g22 = _box_(a22 * a22 + a12 * a12, window)
    h1 = _box_(a11 * db1 + a12 * db2, window)
    h2 = _box_(a12 * db1 + a22 * db2, window)

    # regulariser scales with the constraint strength
    trace = g11 + g22
    idet = 1.0 / (g11 * g22 - g12 * g12 + SOLVE_EPS * trace * trace + 1e-12)
    return (g22 * h1 - g12 * h2) * idet, (g11 * h2 - g12 * h1) * idet


def compute_flow(prev: Frame, next: Frame, params: FlowParams | None = None) -> FlowField:  # noqa: A002
    """Dense flow from `prev` to `next`."""
    params = params or FlowParams()
    if prev.shape != next.shape:
        raise DimensionError(f"Frames differ in size: {prev.shape} vs {next.shape}")
    if prev.width < params.poly_n or prev.height < params.poly_n:
        raise DimensionError(f"Frames smaller than the {params.poly_n}x{params.poly_n} neighborhood")

    prev_levels = _pyramid_(prev.data.astype(np.float64), params)
    next_levels = _pyramid_(next.data.astype(np.float64), params)

    dx = dy = None
    for p_img, n_img in zip(reversed(prev_levels), reversed(next_levels)):
        h, w = p_img.shape
        if dx is None:
            dx = np.zeros((h, w))
            dy = np.zeros((h, w))
        else:
            ch, cw = dx.shape
            dx = cv2.resize(dx, (w, h), interpolation=cv2.INTER_LINEAR) * (w / cw)
            dy = cv2.resize(dy, (w, h), interpolation=cv2.INTER_LINEAR) * (h / ch)

        grid = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
        r0 = _expand_(p_img, params.poly_n, params.poly_sigma)
        r1 = _expand_(n_img, params.poly_n, params.poly_sigma)
        for _ in range(params.iterations):
            dx, dy = _update_(r0, r1, dx, dy, grid, params.window_size)

    return FlowField(dx.astype(np.float32), dy.astype(np.float32))


def write_flo(path: str | Path, flow: FlowField):
    """Little endian dump: `FLOW`, u32 width, u32 height, then (dx, dy) f32 pairs row-major."""
    pairs = np.stack([flow.dx, flow.dy], axis=-1).astype("<f4")
    with Path(path).open("wb") as file:
        file.write(FLO_MAGIC)
        file.write(np.array([flow.width, flow.height], dtype="<u4").tobytes())
        file.write(pairs.tobytes())


def read_flo(path: str | Path) -> FlowField:
    data = Path(path).read_bytes()
    if data[:4] != FLO_MAGIC:
        raise ValueError(f"{path} is not a flow dump: bad magic {data[:4]!r}")
    width, height = (int(v) for v in np.frombuffer(data, dtype="<u4", count=2, offset=4))
    expected = 12 + width * height * 8
    if len(data) != expected:
        raise ValueError(f"{path} holds {len(data)} bytes, expected {expected}")
    pairs = np.frombuffer(data, dtype="<f4", offset=12).reshape(height, width, 2)
    return FlowField(pairs[..., 0].copy(), pairs[..., 1].copy())
