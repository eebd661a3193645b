import numpy as np
import pytest

from flowtrack.imgcore import (
    DimensionError,
    FlowField,
    Frame,
    bilinear_sample,
    bilinear_sample_grid,
    integral,
    luma,
    warp_by_flow,
)


def test_frame_validation():
    frame = Frame(np.zeros((3, 5), dtype=np.uint8))
    assert (frame.width, frame.height) == (5, 3)

    assert Frame(np.array([[0, 255]])).data.dtype == np.uint8
    with pytest.raises(ValueError):
        Frame(np.zeros((2, 2, 3), dtype=np.uint8))
    with pytest.raises(ValueError):
        Frame(np.zeros((0, 4), dtype=np.uint8))
    with pytest.raises(ValueError):
        Frame(np.array([[0, 256]]))


def test_integral_rect_sums(rng):
    data = rng.integers(0, 256, (17, 23), dtype=np.uint8)
    ii = integral(Frame(data))

    assert ii.data.shape == (18, 24)
    assert not ii.data[0].any() and not ii.data[:, 0].any()
    for x, y, w, h in [(0, 0, 23, 17), (3, 4, 5, 6), (22, 16, 1, 1), (7, 0, 9, 17)]:
        assert ii.rect_sum(x, y, w, h) == int(data[y : y + h, x : x + w].astype(np.int64).sum())


def test_integral_saturated_frame():
    ii = integral(Frame(np.full((480, 640), 255, dtype=np.uint8)))
    assert ii.rect_sum(0, 0, 640, 480) == 255 * 640 * 480


def test_luma():
    rgb = np.array([[[255, 0, 0], [0, 255, 0], [0, 0, 255], [255, 255, 255]]], dtype=np.uint8)
    assert luma(rgb).tolist() == [[76, 150, 29, 255]]


def test_bilinear_sample():
    grid = np.array([[0.0, 10.0], [20.0, 30.0]])

    assert bilinear_sample(grid, 1.0, 1.0) == 30.0
    assert bilinear_sample(grid, 0.5, 0.5) == pytest.approx(15.0)
    assert bilinear_sample(grid, 0.25, 0.0) == pytest.approx(2.5)
    # taps outside the grid read as zero
    assert bilinear_sample(grid, 1.5, 0.0) == pytest.approx(5.0)
    assert bilinear_sample(grid, -3.0, 7.0) == 0.0


def test_bilinear_sample_grid_matches_scalar(rng):
    grid = rng.uniform(0, 100, (9, 11))
    xs = rng.uniform(-1, 12, 50)
    ys = rng.uniform(-1, 10, 50)

    batch = bilinear_sample_grid(grid, xs, ys)
    assert np.allclose(batch, [bilinear_sample(grid, x, y) for x, y in zip(xs, ys)])


def test_zero_flow_warp_is_identity(rng):
    grid = rng.uniform(0, 500, (40, 30)).astype(np.float32)
    warped = warp_by_flow(grid, FlowField.zeros(30, 40))

    assert warped.dtype == np.float32
    assert np.array_equal(warped, grid)


def test_integer_flow_shifts():
    grid = np.zeros((10, 10), dtype=np.float32)
    grid[4, 4] = 7.0
    flow = FlowField(np.full((10, 10), -2.0), np.full((10, 10), 1.0))

    warped = warp_by_flow(grid, flow)
    # output(p) = grid(p + flow) so the value moves to (x + 2, y - 1)
    assert warped[3, 6] == 7.0
    assert warped.sum() == 7.0


def test_fractional_warp_matches_bilinear_sampling(rng):
    ys, xs = np.mgrid[0:20, 0:24]
    grid = (2.0 * xs + 3.0 * ys + 10.0).astype(np.float32)
    flow = FlowField(rng.uniform(-2, 2, (20, 24)), rng.uniform(-2, 2, (20, 24)))

    warped = warp_by_flow(grid, flow)
    expected = bilinear_sample_grid(grid, xs + flow.dx.astype(np.float64), ys + flow.dy.astype(np.float64))
    inner = (slice(3, -3), slice(3, -3))
    # 1/32 px interpolation steps on a slope of at most 3 per pixel
    assert np.allclose(warped[inner], expected[inner], atol=0.2)
    # taps outside the map read as zero
    half_out = warp_by_flow(grid, FlowField(np.full((20, 24), -0.5), np.zeros((20, 24))))
    assert np.allclose(half_out[:, 0], grid[:, 0] / 2)
    assert not warp_by_flow(grid, FlowField(np.full((20, 24), -30.0), np.zeros((20, 24)))).any()


def test_warp_shape_mismatch():
    with pytest.raises(DimensionError):
        warp_by_flow(np.zeros((4, 4)), FlowField.zeros(5, 4))


def test_flow_field_validation():
    with pytest.raises(DimensionError):
        FlowField(np.zeros((2, 3)), np.zeros((3, 2)))
    with pytest.raises(ValueError):
        FlowField(np.array([[np.nan]]), np.array([[0.0]]))
