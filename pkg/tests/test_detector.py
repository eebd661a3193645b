import numpy as np
import pytest

from flowtrack.cascade import THRESHOLD_EPS, CascadeModel, lbp_code, round_half_away
from flowtrack.detector import DetectionWindow, FaceRect, ScanConfig, classic_detect, group_rectangles, scan, scan_scales
from flowtrack.imgcore import Frame, integral

from .builders import random_cascade, still_face, textured, to_frame


def brute_force_scan(model: CascadeModel, frame: Frame, cfg: ScanConfig, min_stages: int) -> list[DetectionWindow]:
    """Every stage of every window evaluated, reject level taken afterwards."""
    ii = integral(frame)
    found = []
    for scale in scan_scales(model, frame.width, frame.height, cfg):
        width, height = model.window_size(scale)
        extent_w, extent_h = model.extent(scale)
        step = max(1, round_half_away(cfg.step_fraction * width))
        for y in range(0, frame.height - extent_h + 1, step):
            for x in range(0, frame.width - extent_w + 1, step):
                verdicts = [
                    sum(
                        w.left if w.selects_left(lbp_code(ii, w.feature, x, y, scale)) else w.right
                        for w in stage.weak
                    )
                    >= stage.threshold - THRESHOLD_EPS
                    for stage in model.stages
                ]
                passed = verdicts.index(False) if False in verdicts else len(verdicts)
                if passed >= min_stages:
                    found.append(DetectionWindow(x, y, width, height, passed))
    return found


def test_scan_scales(toy_model):
    scales = list(scan_scales(toy_model, 80, 60, ScanConfig()))

    assert scales[0] == 1.0
    assert all(b > a for a, b in zip(scales, scales[1:]))
    assert max(toy_model.window_size(s)[0] for s in scales) <= 60
    assert toy_model.window_size(scales[-1] * 1.1)[0] > 60


def test_scan_scales_window_limits(toy_model):
    scales = list(scan_scales(toy_model, 80, 60, ScanConfig(min_window=24, max_window=30)))
    assert [toy_model.window_size(s) for s in scales] == [(24, 24), (26, 26), (29, 29)]

    with pytest.raises(ValueError):
        list(scan_scales(toy_model, 80, 60, ScanConfig(min_window=8)))


def test_scan_config_validation():
    with pytest.raises(ValueError):
        ScanConfig(scale_factor=1.0)
    with pytest.raises(ValueError):
        ScanConfig(step_fraction=0.0)
    with pytest.raises(ValueError):
        ScanConfig(min_window=40, max_window=20)


def test_scan_matches_brute_force(rng):
    cfg = ScanConfig(scale_factor=1.25, step_fraction=0.2)
    for _ in range(20):
        model = random_cascade(rng, stages=2, weak_per_stage=2)
        frame = Frame(rng.integers(0, 256, (60, 80), dtype=np.uint8))
        oracle = brute_force_scan(model, frame, cfg, 0)
        assert scan(model, frame, cfg, 0) == oracle
        assert scan(model, frame, cfg, 1) == [w for w in oracle if w.stages_passed >= 1]


def test_scan_order_and_gate(rng):
    model = random_cascade(rng, stages=3)
    frame = Frame(rng.integers(0, 256, (48, 64), dtype=np.uint8))
    windows = scan(model, frame, ScanConfig(), 1)

    assert all(w.stages_passed >= 1 for w in windows)
    keys = [(w.width, w.y, w.x) for w in windows]
    assert keys == sorted(keys)

    with pytest.raises(ValueError):
        scan(model, frame, ScanConfig(), 4)


def test_raising_the_gate_only_drops_windows(rng):
    model = random_cascade(rng, stages=4)
    frame = to_frame(textured(rng, 72, 56, sigma=1.5, amplitude=90.0))
    cfg = ScanConfig(scale_factor=1.2, step_fraction=0.1)
    by_level = [scan(model, frame, cfg, level) for level in range(model.num_stages + 1)]

    for low in range(len(by_level)):
        for high in range(low, len(by_level)):
            assert set(by_level[high]) <= set(by_level[low])
            assert by_level[high] == [w for w in by_level[low] if w.stages_passed >= high]


def test_group_rectangles():
    rects = [(10, 10, 20, 20), (12, 10, 20, 20), (10, 12, 21, 21), (11, 11, 20, 20), (60, 60, 20, 20)]
    faces = group_rectangles(rects, 3)

    assert faces == [FaceRect(11, 11, 20, 20, 4)]
    assert faces[0].center == (21.0, 21.0)
    assert group_rectangles(rects[::-1], 3) == faces
    assert len(group_rectangles(rects, 0)) == 2
    assert group_rectangles([], 3) == []


def test_group_rectangles_similarity_boundary():
    assert len(group_rectangles([(0, 0, 10, 10), (2, 0, 10, 10)], 1)) == 1
    assert group_rectangles([(0, 0, 10, 10), (3, 0, 10, 10)], 1) == []
    assert len(group_rectangles([(0, 0, 10, 10), (0, 0, 12, 12)], 1)) == 1
    assert group_rectangles([(0, 0, 10, 10), (0, 0, 13, 13)], 1) == []


def test_classic_detect_finds_the_face(rng, toy_model):
    faces = classic_detect(toy_model, still_face(rng, at=(20, 12)), ScanConfig())

    assert any(abs(face.center[0] - 38) <= 4 and abs(face.center[1] - 30) <= 4 for face in faces)


def test_classic_detect_without_face(rng, toy_model):
    assert classic_detect(toy_model, to_frame(textured(rng, 80, 60)), ScanConfig()) == []
