import os
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from raymc import bench  # noqa: E402

settings.register_profile("raymc", deadline=None, max_examples=60)
settings.load_profile("raymc")

FULL = os.environ.get("RAYMC_FULL_ACCEPTANCE", "") not in ("", "0")


@pytest.fixture(scope="session")
def b1():
    return bench.generate_benchmark("B1")


@pytest.fixture(scope="session")
def b1_small():
    return bench.generate_benchmark("B1", level=2)


@pytest.fixture(scope="session")
def b2():
    return bench.generate_benchmark("B2")


@pytest.fixture(scope="session")
def cube():
    return bench.generate_benchmark("CUBE")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
