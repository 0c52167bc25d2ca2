from __future__ import annotations

from pathlib import Path

import pytest

from licensegraph.index import load_index
from licensegraph.licensing import load_matrix
from licensegraph.model import ReleaseId

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def matrix():
    return load_matrix()


@pytest.fixture(scope="session")
def fiftyone_index():
    return load_index(FIXTURES / "fiftyone_mini.jsonl")


@pytest.fixture(scope="session")
def fiftyone_root():
    return ReleaseId.parse("fiftyone==0.18.0")


@pytest.fixture(scope="session")
def mit_index():
    return load_index(FIXTURES / "all_mit.jsonl")
