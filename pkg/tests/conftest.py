from __future__ import annotations

import os

import pytest
from hypothesis import settings

from sewing3d.model import CanonicalParams

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")

EX1 = CanonicalParams(1 / 20, 0.0, -7 / 16, 5 / 8, 1.0, 1.0, 1 / 2, 3 / 16, 1.0)
EX2 = CanonicalParams(-1.0, 1.0, 0.0, -1.0, -2.0, -1.0, 0.0, -2.0, 0.0)


@pytest.fixture
def ex1():
    return EX1


@pytest.fixture
def ex2():
    return EX2


def fixture_path(name: str) -> str:
    return os.path.join(FIXTURES, name)
