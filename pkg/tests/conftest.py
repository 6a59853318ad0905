from pathlib import Path

import numpy as np
import pytest

DATA_DIR = Path(__file__).parent / "data"
FIXTURE_IMAGES = DATA_DIR / "fixture-images-idx3-ubyte"
FIXTURE_LABELS = DATA_DIR / "fixture-labels-idx1-ubyte"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def fixture_arrays():
    from lotlab.datasets import read_mnist_arrays

    return read_mnist_arrays(FIXTURE_IMAGES, FIXTURE_LABELS)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in module.summary_lines():
        terminalreporter.write_line(line)
