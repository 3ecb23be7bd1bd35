import numpy as np
import pytest

from dda import data

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def tiny_blades():
    return data.generate_splits("blades", 5, {"train": 6, "val": 3, "test": 3}, size=32)


@pytest.fixture(scope="session")
def small_xor():
    return data.generate_splits("xor", 3, {"train": 60, "val": 20, "test": 20}, noise_sd=0.15)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
