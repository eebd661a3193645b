"""Reading and writing the files the cli works with.

Frames are image files decoded with opencv. Ground truth, detections and timings are
whitespace separated text, one line per frame, with `#` starting a comment.
"""
from __future__ import annotations

import json
from collections.abc import Iterable, Sequence
from pathlib import Path

import cv2
import numpy as np

from flowtrack.imgcore import Frame, luma
from flowtrack.likelihood import FaceBox
from flowtrack.metrics import FN_MARKER, GroundTruthRecord, MetricsReport
from flowtrack.pretty import pformat
from flowtrack.tracker import FrameResult

__all__ = [
    "FrameReadError",
    "DEFAULT_PATTERNS",
    "list_frames",
    "load_frame",
    "read_ground_truth",
    "write_detections",
    "read_detections",
    "write_timings",
    "read_timings",
    "write_report",
    "write_report_json",
    "write_per_frame",
    "annotate",
]

DEFAULT_PATTERNS = ("*.png", "*.pgm")

# BGR
BLUE = (255, 0, 0)
WHITE = (255, 255, 255)


class FrameReadError(ValueError):
    """A frame file could not be decoded."""

    def __init__(self, path: str | Path, reason: str = "not a readable image"):
        self.path = Path(path)
        super().__init__(f"{self.path}: {reason}")


def list_frames(directory: str | Path, patterns: Iterable[str] = DEFAULT_PATTERNS) -> list[Path]:
    """Files in `directory` matching any of `patterns`, sorted by name."""
    directory = Path(directory)
    found = {path for pattern in patterns for path in directory.glob(pattern) if path.is_file()}
    return sorted(found, key=lambda path: path.name)


def load_frame(path: str | Path) -> Frame:
    """Decode an image file to a grayscale frame.

    Color images are reduced with the integer luma formula, 16 bit images keep their
    high byte and an alpha channel is ignored.
    """
    image = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if image is None:
        raise FrameReadError(path)
    if image.dtype == np.uint16:
        image = (image >> 8).astype(np.uint8)
    elif image.dtype != np.uint8:
        raise FrameReadError(path, f"unsupported pixel type {image.dtype}")

    if image.ndim == 3:
        if image.shape[2] == 1:
            image = image[..., 0]
        elif image.shape[2] in (3, 4):
            image = luma(image[..., 2::-1])
        else:
            raise FrameReadError(path, f"unsupported channel count {image.shape[2]}")
    return Frame(image)


def _rows_(path: str | Path) -> Iterable[tuple[int, list[str]]]:
    with Path(path).open("r", encoding="utf-8") as file:
        for number, line in enumerate(file, start=1):
            tokens = line.split("#", 1)[0].split()
            if len(tokens) > 0:
                yield number, tokens


def read_ground_truth(path: str | Path) -> list[GroundTruthRecord]:
    """Parse `frameIndex x1 y1 x2 y2` lines."""
    records = []
    for number, tokens in _rows_(path):
        if len(tokens) != 5:
            raise ValueError(f"{path}:{number}: expected 5 values, found {len(tokens)}")
        try:
            index = int(tokens[0])
            x1, y1, x2, y2 = (float(token) for token in tokens[1:])
        except ValueError as error:
            raise ValueError(f"{path}:{number}: {error}") from error
        records.append(GroundTruthRecord(index, (x1, y1), (x2, y2)))
    return records


def write_detections(path: str | Path, rows: Iterable[tuple[int, Sequence[FaceBox]]]):
    """One line per frame: the frame index, then `cx cy w h peak` for each face."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as file:
        for index, faces in rows:
            parts = [str(index)]
            for face in faces:
                parts.append(
                    f"{face.center_x:.4f} {face.center_y:.4f} {face.width} {face.height} {face.peak:.4f}",
                )
            file.write(" ".join(parts) + "\n")


def read_detections(path: str | Path) -> list[tuple[int, list[FaceBox]]]:
    rows = []
    for number, tokens in _rows_(path):
        if (len(tokens) - 1) % 5 != 0:
            raise ValueError(f"{path}:{number}: detections must come in groups of 5 values")
        try:
            index = int(tokens[0])
            faces = [
                FaceBox(float(cx), float(cy), int(w), int(h), float(peak))
                for cx, cy, w, h, peak in zip(*[iter(tokens[1:])] * 5)
            ]
        except ValueError as error:
            raise ValueError(f"{path}:{number}: {error}") from error
        rows.append((index, faces))
    return rows


def write_timings(path: str | Path, results: Iterable[FrameResult]):
    with Path(path).open("w", encoding="utf-8", newline="\n") as file:
        file.write("# frame flow_ms detect_ms other_ms refreshed\n")
        for result in results:
            t = result.timings
            file.write(
                f"{result.frame_index} {t.flow_ms:.3f} {t.detect_ms:.3f} {t.other_ms:.3f} {int(result.refreshed)}\n",
            )


def read_timings(path: str | Path) -> list[tuple[float, float, float]]:
    """`(flow_ms, detect_ms, other_ms)` per frame, in file order."""
    timings = []
    for number, tokens in _rows_(path):
        if len(tokens) < 4:
            raise ValueError(f"{path}:{number}: expected at least 4 values, found {len(tokens)}")
        timings.append((float(tokens[1]), float(tokens[2]), float(tokens[3])))
    return timings


def write_report(path: str | Path, report: MetricsReport):
    Path(path).write_text(pformat(report.to_dict()) + "\n", encoding="utf-8")


def write_report_json(path: str | Path, values: dict):
    Path(path).write_text(json.dumps(values, indent=2) + "\n", encoding="utf-8")


def write_per_frame(path: str | Path, report: MetricsReport):
    """Per frame accuracy series: frame, valid flag, distance (or the marker when no detection is valid), stability."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as file:
        file.write("# frame valid distance_px stability_px\n")
        for index, valid, distance, step in report.per_frame:
            shown = distance if distance is not None else FN_MARKER
            file.write(f"{index} {valid} {shown:.4f} {'-' if step is None else f'{step:.4f}'}\n")


def annotate(frame: Frame, result: FrameResult, path: str | Path):
    """Write the frame as a color PNG with tracked faces drawn on it.

    Faces get a blue box and a center dot. Refresh frames get a white border.
    """
    image = cv2.cvtColor(frame.data, cv2.COLOR_GRAY2BGR)
    if result.refreshed:
        cv2.rectangle(image, (0, 0), (frame.width - 1, frame.height - 1), WHITE, 2)
    for face in result.faces:
        x, y, w, h = face.rect
        cv2.rectangle(image, (x, y), (x + w - 1, y + h - 1), BLUE, 1)
        cv2.circle(image, (int(face.center_x), int(face.center_y)), 2, BLUE, -1)
    if not cv2.imwrite(str(path), image):
        raise OSError(f"Failed to write {path}")
