from __future__ import annotations

from pathlib import Path

import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

ROOT = Path(__file__).resolve().parents[1]
NETWORKS = ROOT / "networks"


@pytest.fixture
def networks() -> Path:
    return NETWORKS
