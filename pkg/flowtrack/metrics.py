"""Tracking metrics against single face eye annotations.

The ground truth face center is the midpoint of the eyes moved down by a fixed offset.
Per frame, the detection nearest to it counts as valid when closer than the match
radius; every other detection is a false positive and a frame without detections is a
false negative. Stability is the distance between valid centers of consecutive frames.
"""
from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FrameCountError",
    "GroundTruthRecord",
    "FaceCenter",
    "FrameMatch",
    "MetricsReport",
    "SuiteSummary",
    "MATCH_PX",
    "GT_OFFSET_Y",
    "FN_MARKER",
    "gt_face_center",
    "match_frame",
    "detection_rate",
    "stability",
    "evaluate",
    "summarize",
]

MATCH_PX = 20.0
GT_OFFSET_Y = 10.0
# per frame accuracy value written for frames without any detection
FN_MARKER = -5.0


class FrameCountError(ValueError):
    """Detections and ground truth cover different numbers of frames."""


@dataclass(frozen=True)
class GroundTruthRecord:
    frame_index: int
    left_eye: tuple[float, float]
    right_eye: tuple[float, float]


@dataclass(frozen=True)
class FaceCenter:
    x: float
    y: float

    def distance(self, other: FaceCenter) -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class FrameMatch:
    valid: int
    distance: float | None
    false_positives: int
    false_negative: int
    center: FaceCenter | None = None


@dataclass
class MetricsReport:
    detection_rate: float
    mean_accuracy: float | None
    false_positives: int
    false_negatives: int
    mean_stability: float | None
    per_frame: list[tuple[int, int, float | None, float | None]] = field(default_factory=list)
    mean_flow_ms: float = 0.0
    mean_detect_ms: float = 0.0
    mean_other_ms: float = 0.0

    def to_dict(self) -> dict[str, float | int | None]:
        return {
            "detection_rate": self.detection_rate,
            "mean_accuracy_px": self.mean_accuracy,
            "false_positives": self.false_positives,
            "false_negatives": self.false_negatives,
            "mean_stability_px": self.mean_stability,
            "mean_flow_ms": self.mean_flow_ms,
            "mean_detect_ms": self.mean_detect_ms,
            "mean_other_ms": self.mean_other_ms,
        }


def gt_face_center(rec: GroundTruthRecord, offset_y: float = GT_OFFSET_Y) -> FaceCenter:
    (x1, y1), (x2, y2) = rec.left_eye, rec.right_eye
    return FaceCenter(x1 + (x2 - x1) / 2, y1 + (y2 - y1) / 2 + offset_y)


def match_frame(detections: Sequence[FaceCenter], gt: FaceCenter | None, match_px: float = MATCH_PX) -> FrameMatch:
    """Match one frame's detections to its ground truth center.

    Ties on the nearest distance go to the lowest detection index. Without ground
    truth every detection is a false positive.
    """
    if len(detections) == 0:
        return FrameMatch(0, None, 0, 1)
    if gt is None:
        return FrameMatch(0, None, len(detections), 0)

    distances = [detection.distance(gt) for detection in detections]
    nearest = min(range(len(distances)), key=lambda i: (distances[i], i))
    if distances[nearest] < match_px:
        return FrameMatch(1, distances[nearest], len(detections) - 1, 0, detections[nearest])
    return FrameMatch(0, None, len(detections), 0)


def detection_rate(per_frame_valid: Sequence[int]) -> float:
    if len(per_frame_valid) == 0:
        raise ValueError("Detection rate needs at least one frame")
    return sum(per_frame_valid) / len(per_frame_valid)


def stability(centers: Sequence[tuple[int, FaceCenter]]) -> list[float]:
    """Distances between valid centers of frames whose indices differ by exactly one."""
    return [
        current.distance(previous)
        for (prev_index, previous), (index, current) in zip(centers, centers[1:])
        if index - prev_index == 1
    ]


def _mean_(values: Sequence[float]) -> float | None:
    return float(np.mean(values)) if len(values) > 0 else None


def evaluate(
    detections: Sequence[tuple[int, Sequence[FaceCenter]]],
    gt: Sequence[GroundTruthRecord],
    timings: Sequence[tuple[float, float, float]] | None = None,
    *,
    match_px: float = MATCH_PX,
    offset_y: float = GT_OFFSET_Y,
) -> MetricsReport:
    """Score per frame detections against ground truth.

    `detections` holds `(frame_index, centers)` for every frame; `timings` optional
    `(flow_ms, detect_ms, other_ms)` per frame. Frames are matched by index.
    """
    if len(detections) != len(gt):
        raise FrameCountError(f"{len(detections)} detection frames but {len(gt)} ground truth frames")

    truth = {rec.frame_index: gt_face_center(rec, offset_y) for rec in gt}
    if len(truth) != len(gt):
        raise FrameCountError("Ground truth repeats frame indices")
    if len({index for index, _ in detections}) != len(detections):
        raise FrameCountError("Detections repeat frame indices")

    matches = []
    for index, centers in sorted(detections, key=lambda item: item[0]):
        if index not in truth:
            raise FrameCountError(f"Frame {index} has detections but no ground truth")
        matches.append((index, match_frame(centers, truth[index], match_px)))

    valid_centers = [(index, m.center) for index, m in matches if m.valid]
    errors = stability(valid_centers)
    by_index = dict(valid_centers)
    stability_at = {
        index: center.distance(by_index[index - 1]) for index, center in valid_centers if index - 1 in by_index
    }

    report = MetricsReport(
        detection_rate=detection_rate([m.valid for _, m in matches]),
        mean_accuracy=_mean_([m.distance for _, m in matches if m.valid]),
        false_positives=sum(m.false_positives for _, m in matches),
        false_negatives=sum(m.false_negative for _, m in matches),
        mean_stability=_mean_(errors),
        per_frame=[(index, m.valid, m.distance, stability_at.get(index)) for index, m in matches],
    )
    if timings is not None and len(timings) > 0:
        report.mean_flow_ms, report.mean_detect_ms, report.mean_other_ms = (
            float(v) for v in np.mean(np.asarray(timings, dtype=np.float64), axis=0)
        )
    return report


@dataclass
class SuiteSummary:
    """Per video reports and their averages over the suite."""

    reports: dict[str, MetricsReport]
    mean_detection_rate: float
    mean_accuracy: float | None
    mean_stability: float | None
    false_positives: int
    false_negatives: int

    def to_dict(self) -> dict[str, float | int | None]:
        return {
            "videos": len(self.reports),
            "mean_detection_rate": self.mean_detection_rate,
            "mean_accuracy_px": self.mean_accuracy,
            "mean_stability_px": self.mean_stability,
            "false_positives": self.false_positives,
            "false_negatives": self.false_negatives,
        }


def summarize(reports: Mapping[str, MetricsReport]) -> SuiteSummary:
    """Average per video metrics; videos without valid detections don't count towards accuracy or stability."""
    if len(reports) == 0:
        raise ValueError("A suite needs at least one video")
    ordered = dict(sorted(reports.items()))
    values = list(ordered.values())
    return SuiteSummary(
        reports=ordered,
        mean_detection_rate=float(np.mean([r.detection_rate for r in values])),
        mean_accuracy=_mean_([r.mean_accuracy for r in values if r.mean_accuracy is not None]),
        mean_stability=_mean_([r.mean_stability for r in values if r.mean_stability is not None]),
        false_positives=sum(r.false_positives for r in values),
        false_negatives=sum(r.false_negatives for r in values),
    )
