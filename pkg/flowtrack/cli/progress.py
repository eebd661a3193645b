"""Single line frame progress bar."""
from __future__ import annotations

import sys
from typing import TextIO

__all__ = ["Progress"]


class Progress:
    """Fill style progress bar redrawn in place on one terminal line.

    Nothing is written when the output isn't a terminal, so redirected runs and
    tests stay clean.

    Args:
        prompt (str): Text shown before the bar.
        target (int): Count that completes the bar.
        width (int): Bar width in cells.
        out (TextIO): Output stream. Defaults to `stderr`.
    """

    FILL = "▏▎▍▌▋▊▉█"

    def __init__(self, prompt: str, target: int, width: int = 24, out: TextIO | None = None):
        self._prompt_ = prompt
        self._target_ = max(1, target)
        self._width_ = width
        self._total_ = 0
        self._out_ = out or sys.stderr
        self.enabled = hasattr(self._out_, "isatty") and self._out_.isatty()

    @property
    def complete(self) -> bool:
        return self._total_ >= self._target_

    def __str__(self) -> str:
        percent = min(1.0, self._total_ / self._target_)
        index = self._width_ * percent
        remain = int(len(self.FILL) * (index - int(index)))
        bar = self.FILL[-1] * int(index)
        if percent != 1:
            bar += self.FILL[remain]
        color = "\x1b[32m" if self.complete else ""
        return f"{self._prompt_} [{color}{bar.ljust(self._width_)}\x1b[39m] {self._total_}/{self._target_}"

    def advance(self, count: int = 1):
        self._total_ += count
        if self.enabled:
            self._out_.write(f"\r{self}")
            self._out_.flush()

    def __enter__(self) -> Progress:
        return self

    def __exit__(self, *_):
        if self.enabled:
            self._out_.write("\n")
            self._out_.flush()
