import os
from pathlib import Path

import numpy as np
import pytest

from flowtrack.cascade import CascadeModel, serialize_native

from .builders import face_cascade


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20)


@pytest.fixture
def toy_model() -> CascadeModel:
    return face_cascade()


@pytest.fixture
def toy_cascade_file(tmp_path: Path, toy_model: CascadeModel) -> Path:
    path = tmp_path / "toy.cascade"
    path.write_bytes(serialize_native(toy_model))
    return path


@pytest.fixture
def lbp_cascade() -> Path:
    """The public frontal LBP cascade, when `FLOWTRACK_LBP_CASCADE` points at it."""
    value = os.environ.get("FLOWTRACK_LBP_CASCADE")
    if value is None or not Path(value).is_file():
        pytest.skip("FLOWTRACK_LBP_CASCADE is not set to a cascade file")
    return Path(value)
