"""Native cascade format.

```
FTCASCADE 1 <baseW> <baseH> <numStages>
STAGE <numWeak> <threshold>
WEAK <x> <y> <bw> <bh> <leftVal> <rightVal> <lutHex>
...
```

`lutHex` is 64 hex characters. Reading the hex string's bits left to right, the
i-th bit is LUT bit i.
"""
from __future__ import annotations

import re

import numpy as np

from .model import CascadeFormatError, CascadeModel, MBLBPFeature, Stage, WeakClassifier

__all__ = [
    "HeaderError",
    "TruncatedError",
    "FeatureBoundsError",
    "parse_native",
    "serialize_native",
    "lut_from_hex",
    "lut_to_hex",
]

MAGIC = "FTCASCADE"
VERSION = "1"
LINE = re.compile(rb"[^\n]*\n?")


class HeaderError(CascadeFormatError):
    """Missing or malformed `FTCASCADE` header."""


class TruncatedError(CascadeFormatError):
    """The file ended, or a line was short, before all declared stages were read."""


class FeatureBoundsError(CascadeFormatError):
    """A feature's 3x3 block grid doesn't fit the base window."""


def lut_from_hex(text: str) -> int:
    if len(text) != 64:
        raise ValueError(f"Expected 64 hex characters: {len(text)} found")
    bits = np.unpackbits(np.frombuffer(bytes.fromhex(text), dtype=np.uint8))
    return sum(1 << int(i) for i in np.flatnonzero(bits))


def lut_to_hex(lut: int) -> str:
    bits = np.array([(lut >> i) & 1 for i in range(256)], dtype=np.uint8)
    return np.packbits(bits).tobytes().hex()


def _lines_(data: bytes) -> list[tuple[int, list[str]]]:
    lines = []
    for match in LINE.finditer(data):
        if match.start() == match.end():
            break
        tokens = match.group(0).decode("ascii", errors="replace").split()
        if len(tokens) > 0:
            lines.append((match.start(), tokens))
    return lines


def _number_(token: str, kind: type, error: type[CascadeFormatError], offset: int, stage: int | None = None):
    try:
        return kind(token)
    except ValueError:
        raise error(f"Invalid {kind.__name__} {token!r}", offset=offset, stage=stage) from None


def parse_native(data: bytes) -> CascadeModel:
    """Parse a native cascade file. Errors carry the byte offset of the offending line."""
    lines = _lines_(data)
    if len(lines) == 0:
        raise HeaderError("Empty cascade file", offset=0)

    offset, header = lines[0]
    if len(header) != 5 or header[0] != MAGIC:
        raise HeaderError(f"Expected '{MAGIC} {VERSION} <baseW> <baseH> <numStages>'", offset=offset)
    if header[1] != VERSION:
        raise HeaderError(f"Unsupported native cascade version {header[1]!r}", offset=offset)
    base_w = _number_(header[2], int, HeaderError, offset)
    base_h = _number_(header[3], int, HeaderError, offset)
    num_stages = _number_(header[4], int, HeaderError, offset)
    if base_w < 1 or base_h < 1 or num_stages < 1:
        raise HeaderError("Base window and stage count must be positive", offset=offset)

    cursor = 1
    end = len(data)
    stages = []
    for index in range(num_stages):
        if cursor >= len(lines):
            raise TruncatedError(f"Expected {num_stages} stages, found {index}", offset=end, stage=index)
        offset, tokens = lines[cursor]
        cursor += 1
        if len(tokens) != 3 or tokens[0] != "STAGE":
            raise TruncatedError("Expected 'STAGE <numWeak> <threshold>'", offset=offset, stage=index)
        num_weak = _number_(tokens[1], int, TruncatedError, offset, index)
        threshold = _number_(tokens[2], float, TruncatedError, offset, index)
        if num_weak < 1:
            raise TruncatedError("A stage needs at least one weak classifier", offset=offset, stage=index)

        weak = []
        for _ in range(num_weak):
            if cursor >= len(lines):
                raise TruncatedError(f"Stage declares {num_weak} weak classifiers", offset=end, stage=index)
            offset, tokens = lines[cursor]
            cursor += 1
            if len(tokens) != 8 or tokens[0] != "WEAK":
                raise TruncatedError(
                    "Expected 'WEAK <x> <y> <bw> <bh> <leftVal> <rightVal> <lutHex>'",
                    offset=offset,
                    stage=index,
                )
            x, y, bw, bh = (_number_(t, int, TruncatedError, offset, index) for t in tokens[1:5])
            left = _number_(tokens[5], float, TruncatedError, offset, index)
            right = _number_(tokens[6], float, TruncatedError, offset, index)
            try:
                lut = lut_from_hex(tokens[7])
            except ValueError as error:
                raise TruncatedError(f"Invalid LUT: {error}", offset=offset, stage=index) from None
            if x < 0 or y < 0 or bw < 1 or bh < 1 or x + 3 * bw > base_w or y + 3 * bh > base_h:
                raise FeatureBoundsError(
                    f"Feature ({x}, {y}, {bw}, {bh}) exceeds the {base_w}x{base_h} base window",
                    offset=offset,
                    stage=index,
                )
            weak.append(WeakClassifier(MBLBPFeature(x, y, bw, bh), lut, left, right))
        stages.append(Stage(tuple(weak), threshold))

    return CascadeModel(base_w, base_h, tuple(stages))


def serialize_native(model: CascadeModel) -> bytes:
    lines = [f"{MAGIC} {VERSION} {model.base_width} {model.base_height} {model.num_stages}"]
    for stage in model.stages:
        lines.append(f"STAGE {len(stage.weak)} {stage.threshold!r}")
        for weak in stage.weak:
            f = weak.feature
            lines.append(
                f"WEAK {f.x} {f.y} {f.block_width} {f.block_height} "
                f"{weak.left!r} {weak.right!r} {lut_to_hex(weak.lut)}",
            )
    return ("\n".join(lines) + "\n").encode("ascii")
