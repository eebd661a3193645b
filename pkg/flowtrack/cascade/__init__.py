"""MB-LBP cascade models.

Models are loaded from the native text format or the standard xml schema and
evaluated per window, reporting how many stages a window passed.
"""
from pathlib import Path

from .model import *
from .native import FeatureBoundsError, HeaderError, TruncatedError, parse_native, serialize_native
from .standard import parse_standard_xml, serialize_standard_xml


def load_cascade(path: str | Path) -> CascadeModel:
    """Load a cascade file, picking the parser from the file contents."""
    data = Path(path).read_bytes()
    if data.lstrip()[:1] == b"<":
        return parse_standard_xml(data.decode("utf-8"))
    return parse_native(data)
