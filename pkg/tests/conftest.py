import copy
from pathlib import Path

import pytest

from almostiss.comparison import from_text
from almostiss.config import load_config, parse_config
from almostiss.regions import storage_from_text
from almostiss.utils import read_json

FIXTURES = Path(__file__).parent / "fixtures"


def fixture_path(name: str) -> Path:
    return FIXTURES / f"{name}.json"


def fixture_data(name: str) -> dict:
    return copy.deepcopy(read_json(fixture_path(name)))


def make_config(name: str = "square", **problem):
    """Fixture config with selected problem fields replaced."""
    data = fixture_data(name)
    data["problem"].update(problem)
    return parse_config(data)


@pytest.fixture
def square_config():
    return load_config(fixture_path("square"))


@pytest.fixture
def stable_config():
    return load_config(fixture_path("stable_linear"))


@pytest.fixture
def unstable_config():
    return load_config(fixture_path("unstable_decoupled"))


@pytest.fixture
def gap_config():
    return load_config(fixture_path("gap"))


@pytest.fixture
def abs_storage():
    return storage_from_text("abs(x1)", ["x1"], "v1"), storage_from_text("abs(x2)", ["x2"], "v2")


@pytest.fixture
def gain():
    return from_text
