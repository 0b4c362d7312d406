import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dualct.geometry import ConeBeamGeometry, uniform_angles  # noqa: E402

ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_geometry():
    return ConeBeamGeometry(100.0, 200.0, (16, 16), (2.0, 2.0), (12, 12, 12), (1.0, 1.0, 1.0),
                            uniform_angles(2))
