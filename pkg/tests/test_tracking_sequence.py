"""Tracker against per frame detection on a synthetic sequence with an occlusion."""
from flowtrack.detector import ScanConfig, classic_detect
from flowtrack.metrics import FaceCenter, GroundTruthRecord, evaluate
from flowtrack.tracker import TrackerConfig, run_sequence

from .builders import face_cascade, moving_face

SCAN = ScanConfig(step_fraction=0.08)


def ground_truth(centers: list[tuple[float, float]]) -> list[GroundTruthRecord]:
    # eyes 10 px above the face center so the default offset lands on it
    return [GroundTruthRecord(t, (cx - 8, cy - 10), (cx + 8, cy - 10)) for t, (cx, cy) in enumerate(centers)]


def test_tracking_survives_occlusion(rng):
    sequence = moving_face(rng)
    model = face_cascade(stages=2)
    gt = ground_truth(sequence.centers())

    results = run_sequence(sequence.frames, TrackerConfig(n=20, tau=2, c=4.0, scan=SCAN), model)
    tracked = evaluate(
        [(r.frame_index, [FaceCenter(f.center_x, f.center_y) for f in r.faces]) for r in results],
        gt,
        [(r.timings.flow_ms, r.timings.detect_ms, r.timings.other_ms) for r in results],
    )

    per_frame = [
        (t, [FaceCenter(*face.center) for face in classic_detect(model, frame, SCAN, 3)])
        for t, frame in enumerate(sequence.frames)
    ]
    classic = evaluate(per_frame, gt)

    assert sum(result.refreshed for result in results) == 3
    assert tracked.detection_rate >= 0.95
    assert classic.detection_rate < tracked.detection_rate
    assert all(valid == 0 for t, valid, _, _ in classic.per_frame if t in sequence.occluded)
    assert tracked.mean_stability <= classic.mean_stability
    assert tracked.mean_flow_ms > tracked.mean_other_ms > 0.0
