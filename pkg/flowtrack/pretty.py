"""flowtrack's pretty module

Small ansi helpers used by the logger and the report printers. Colors are
given the same way everywhere: a system color name, `#rgb`/`#rrggbb` hex,
an `r,g,b` triple or an xterm index.
"""
from __future__ import annotations

import re
from collections.abc import Mapping
from typing import Literal, TypedDict

__all__ = ["Color", "Theme", "ONE_DARK", "NORD", "strip_ansi", "style", "pformat"]

ANSI = re.compile(r"\x1b\[[<?]?(?:(?:\d{1,3};?)*)[a-zA-Z~]|\x1b]\d;;[^\x1b]*\x1b\\")

SYSTEM_COLORS = {
    "black": 0,
    "red": 1,
    "green": 2,
    "yellow": 3,
    "blue": 4,
    "magenta": 5,
    "cyan": 6,
    "white": 7,
}


class Color:
    type: Literal["rgb", "hex", "xterm", "system"]
    value: int = -1
    r: int = -1
    g: int = -1
    b: int = -1

    def __init__(self, color: str) -> None:
        if color.startswith("#"):
            color = color.lstrip("#")
            if len(color) not in [3, 6]:
                raise ValueError(f"Expected hex value to have 3 to 6 digits: {len(color)} found")
            if len(color) == 3:
                color = f"{color[0]*2}{color[1]*2}{color[2]*2}"
            self.type = "hex"
            self.r = int(color[:2], 16)
            self.g = int(color[2:4], 16)
            self.b = int(color[4:6], 16)
        elif "," in color:
            parts = color.split(",")
            if len(parts) < 3:
                raise ValueError(f"Expected rgb color to have 3 values: {len(parts)} found")
            self.type = "rgb"
            self.r, self.g, self.b = (int(part) for part in parts[:3])
        elif color.lower() in SYSTEM_COLORS:
            self.type = "system"
            self.value = SYSTEM_COLORS[color.lower()]
        else:
            try:
                self.value = int(color)
            except ValueError as error:
                raise ValueError(f"Invalid named color: {color}") from error
            self.type = "xterm"

    def fg(self) -> str:
        if self.type == "system":
            return f"3{self.value}"
        if self.type == "xterm":
            return f"38;5;{self.value}"
        return f"38;2;{self.r};{self.g};{self.b}"


def strip_ansi(ansi: str = "") -> str:
    """Strip ansi control sequences and hyperlinks from a string."""
    return ANSI.sub("", ansi)


def style(text: str, color: str | None = None, *, bold: bool = False) -> str:
    """Wrap text in the ansi sequences for the given color and weight."""
    codes = []
    if bold:
        codes.append("1")
    if color is not None:
        codes.append(Color(color).fg())
    if len(codes) == 0:
        return text
    return f"\x1b[{';'.join(codes)}m{text}\x1b[0m"


class Theme(TypedDict):
    key: str
    number: str
    string: str
    none: str


ONE_DARK: Theme = {
    "key": "#61AFEF",
    "number": "#E5C07B",
    "string": "#98C379",
    "none": "#C678DD",
}

NORD: Theme = {
    "key": "#88C0D0",
    "number": "#B48EAD",
    "string": "#A3BE8C",
    "none": "#5E81AC",
}


def _pp_value_(value: object, theme: Theme, color: bool) -> str:
    if value is None:
        text, key = "none", "none"
    elif isinstance(value, float):
        text, key = f"{value:.4f}", "number"
    elif isinstance(value, int):
        text, key = str(value), "number"
    else:
        text, key = str(value), "string"
    return style(text, theme[key]) if color else text


def pformat(values: Mapping[str, object], theme: Theme = ONE_DARK, color: bool = False) -> str:
    """Format a flat mapping as aligned `key: value` lines.

    Floats are printed with four decimals and `None` as `none`. When `color` is set
    keys and values are colored with the theme.
    """
    width = max((len(key) for key in values), default=0)
    lines = []
    for key, value in values.items():
        name = key.ljust(width)
        if color:
            name = style(name, theme["key"])
        lines.append(f"{name} : {_pp_value_(value, theme, color)}")
    return "\n".join(lines)
