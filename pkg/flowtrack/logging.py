"""flowtrack logging module.

A small thread safe logger. It doesn't mean to replace the standard logging library,
only to give the cli and tracker a consistent way of reporting progress.
"""
from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from io import TextIOWrapper
from pathlib import Path
from sys import stderr
from threading import Lock
from typing import TextIO

from flowtrack.pretty import strip_ansi, style

__all__ = ["LogLevel", "Logger", "log", "get_logger"]

StrLike = str | Path
Buffer = TextIO | TextIOWrapper

__llock__ = Lock()

_CODES_ = {
    -1: ("DEBUG", "magenta"),
    0: ("INFO", "cyan"),
    1: ("WARN", "yellow"),
    2: ("ERROR", "red"),
}


@dataclass
class LogLevel:
    """Default log levels.

    Debug: -1
    Info: 0
    Warn: 1
    Error: 2
    """

    Debug = -1
    Info = 0
    Warn = 1
    Error = 2


def _format_code_(level: int, codes: dict[int, tuple[str, str]] | None = None) -> str:
    if codes is not None and (lvl := codes.get(level, None)) is not None:
        return style(lvl[0], lvl[1])
    if (lvl := _CODES_.get(level, None)) is not None:
        return style(lvl[0], lvl[1])
    return str(level)


def _write_(out: Buffer, line: str):
    if hasattr(out, "isatty") and out.isatty():
        out.write(f"{line}\n")
    else:
        out.write(f"{strip_ansi(line)}\n")
    out.flush()


def log(
    *msg: str,
    level: int = LogLevel.Info,
    fmt: str = "{dt} [{code}] {msg}",
    dt_fmt: str = "%m/%d/%YT%I:%M:%S",
    out: Buffer | StrLike = stderr,
    sep: str = " ",
):
    """Log a message to the output.

    Args:
        *msg (str): All parts of the message. Joined by `sep` which is ` ` by default.
        level (int): The log level of the event. This determines what the log code is.
        fmt (str): The log format. Can use the keywords `dt`, `code`, and `msg`.
        dt_fmt (str): The `strftime` format applied to the current date.
        out (str | Path | TextIOWrapper): The output for the log. Ansi sequences are
            stripped when the output isn't a terminal. Defaults to `stderr`.
        sep (str): The seperator to use between message parts.
    """
    with __llock__:
        line = fmt.format(
            msg=sep.join(msg),
            code=_format_code_(level),
            dt=datetime.now().strftime(dt_fmt),
        ).strip()

        if isinstance(out, StrLike):
            with Path(out).open("+a", encoding="utf-8") as file:
                file.write(f"{strip_ansi(line)}\n")
        else:
            _write_(out, line)


class Logger:
    """Logger that keeps track of formatting, the minimum log level and custom codes.

    Args:
        fmt (str): The log format. Can use the keywords `dt`, `code`, and `msg`.
        dt_fmt (str): The `strftime` format applied to the current date.
        out (str | Path | TextIOWrapper): The output for the logs. Defaults to `stderr`.
        min_level (int): Events below this level are dropped. Defaults to `LogLevel.Info`.
        codes (list[tuple[int, str, str]]): Custom log codes as (level, display text, color).
    """

    def __init__(
        self,
        fmt: str = "{dt} [{code}] {msg}",
        dt_fmt: str = "%m/%d/%YT%I:%M:%S",
        out: Buffer | StrLike = stderr,
        min_level: int = LogLevel.Info,
        codes: list[tuple[int, str, str]] | None = None,
    ):
        self.fmt = fmt
        self.dt_fmt = dt_fmt
        self.min_level = min_level
        self.codes = {code[0]: (code[1], code[2]) for code in codes or []}

        self.__file__ = False
        self.__lock__ = Lock()

        if isinstance(out, StrLike):
            self.out = Path(out).open("+w", encoding="utf-8")  # noqa: SIM115
            self.__file__ = True
        else:
            self.out = out

    def __del__(self):
        if getattr(self, "__file__", False):
            self.out.close()
            self.__file__ = False

    def enabled(self, level: int) -> bool:
        return level >= self.min_level

    def log(self, *msg: str, level: int = LogLevel.Info, sep: str = " "):
        """Log an event given message parts and a level. Events below the
        minimum level are ignored.
        """
        if level < self.min_level:
            return

        with self.__lock__:
            line = self.fmt.format(
                msg=sep.join(msg),
                code=_format_code_(level, self.codes),
                dt=datetime.now().strftime(self.dt_fmt),
            ).strip()
            _write_(self.out, line)

    def debug(self, *msg: str):
        self.log(*msg, level=LogLevel.Debug)

    def info(self, *msg: str):
        self.log(*msg, level=LogLevel.Info)

    def warn(self, *msg: str):
        self.log(*msg, level=LogLevel.Warn)

    def error(self, *msg: str):
        self.log(*msg, level=LogLevel.Error)


_LOGGER_ = Logger(min_level=LogLevel.Warn)


def get_logger() -> Logger:
    """The process wide logger used by the library and cli."""
    return _LOGGER_
