import pytest

from flowtrack.metrics import (
    FaceCenter,
    FrameCountError,
    GroundTruthRecord,
    MetricsReport,
    detection_rate,
    evaluate,
    gt_face_center,
    match_frame,
    stability,
    summarize,
)


def record(index: int, cx: float, cy: float) -> GroundTruthRecord:
    """Eyes placed so the ground truth face center lands on (cx, cy)."""
    return GroundTruthRecord(index, (cx - 20, cy - 10), (cx + 20, cy - 10))


def test_gt_face_center():
    assert gt_face_center(GroundTruthRecord(0, (100, 50), (140, 50))) == FaceCenter(120, 60)
    assert gt_face_center(GroundTruthRecord(0, (100, 50), (140, 50)), offset_y=0) == FaceCenter(120, 50)


def test_match_radius_is_strict():
    gt = FaceCenter(0, 0)
    assert match_frame([FaceCenter(19.999, 0)], gt).valid == 1
    assert match_frame([FaceCenter(20.0, 0)], gt).valid == 0
    assert match_frame([FaceCenter(20.0, 0)], gt).false_positives == 1


def test_match_frame_counts():
    gt = FaceCenter(0, 0)
    match = match_frame([FaceCenter(12, 0), FaceCenter(0, 5), FaceCenter(30, 0)], gt)

    assert (match.valid, match.distance, match.false_positives, match.false_negative) == (1, 5.0, 2, 0)
    assert match.center == FaceCenter(0, 5)
    assert match_frame([], gt).false_negative == 1
    assert match_frame([FaceCenter(1, 1)], None).false_positives == 1


def test_match_frame_tie_goes_to_first():
    match = match_frame([FaceCenter(3, 0), FaceCenter(0, 3)], FaceCenter(0, 0))
    assert match.center == FaceCenter(3, 0)


def test_detection_rate():
    assert detection_rate([1, 0, 1, 1]) == 0.75
    with pytest.raises(ValueError):
        detection_rate([])


def test_stability_needs_consecutive_frames():
    assert stability([(0, FaceCenter(0, 0)), (1, FaceCenter(3, 4))]) == [5.0]
    assert stability([(0, FaceCenter(0, 0)), (2, FaceCenter(3, 4))]) == []
    assert stability([(4, FaceCenter(1, 1))]) == []


def test_evaluate_five_frames():
    gt = [record(t, 100, 100) for t in range(5)]
    detections = [
        (0, [FaceCenter(103, 100)]),
        (1, []),
        (2, [FaceCenter(100, 104), FaceCenter(150, 100)]),
        (3, [FaceCenter(100, 95)]),
        (4, []),
    ]
    report = evaluate(detections, gt)

    assert report.detection_rate == pytest.approx(0.6)
    assert report.false_negatives == 2
    assert report.false_positives == 1
    assert report.mean_accuracy == pytest.approx(4.0)
    # frames 2 and 3 are the only consecutive valid pair
    assert report.mean_stability == pytest.approx(9.0)
    assert report.per_frame == [
        (0, 1, 3.0, None),
        (1, 0, None, None),
        (2, 1, 4.0, None),
        (3, 1, 5.0, 9.0),
        (4, 0, None, None),
    ]


def test_evaluate_match_radius_and_offset():
    gt = [record(0, 100, 100)]
    detections = [(0, [FaceCenter(125, 100)])]

    assert evaluate(detections, gt).detection_rate == 0.0
    assert evaluate(detections, gt, match_px=30).detection_rate == 1.0
    assert evaluate([(0, [FaceCenter(100, 90)])], gt, offset_y=0).mean_accuracy == pytest.approx(0.0)


def test_evaluate_timings():
    gt = [record(t, 50, 50) for t in range(2)]
    detections = [(0, [FaceCenter(50, 50)]), (1, [FaceCenter(50, 51)])]
    report = evaluate(detections, gt, [(10.0, 30.0, 1.0), (20.0, 0.0, 3.0)])

    assert (report.mean_flow_ms, report.mean_detect_ms, report.mean_other_ms) == (15.0, 15.0, 2.0)
    assert report.to_dict()["mean_stability_px"] == pytest.approx(1.0)


def test_evaluate_frame_count_errors():
    gt = [record(t, 50, 50) for t in range(3)]
    with pytest.raises(FrameCountError):
        evaluate([(0, []), (1, [])], gt)
    with pytest.raises(FrameCountError):
        evaluate([(0, []), (1, []), (7, [])], gt)
    with pytest.raises(FrameCountError):
        evaluate([(0, []), (1, [])], [record(0, 1, 1), record(0, 1, 1)])
    with pytest.raises(FrameCountError, match="repeat"):
        evaluate([(0, [FaceCenter(50, 60)]), (0, [FaceCenter(50, 60)])], [record(0, 50, 50), record(1, 50, 50)])


def report(rate: float, accuracy: float | None, stable: float | None, fp: int = 0, fn: int = 0) -> MetricsReport:
    return MetricsReport(rate, accuracy, fp, fn, stable)


def test_summarize():
    summary = summarize({"b": report(0.5, 4.0, None, fp=2), "a": report(1.0, 2.0, 1.0, fn=1), "c": report(0.0, None, None)})

    assert list(summary.reports) == ["a", "b", "c"]
    assert summary.mean_detection_rate == pytest.approx(0.5)
    assert summary.mean_accuracy == pytest.approx(3.0)
    assert summary.mean_stability == pytest.approx(1.0)
    assert summary.to_dict()["videos"] == 3
    assert (summary.false_positives, summary.false_negatives) == (2, 1)

    with pytest.raises(ValueError):
        summarize({})
