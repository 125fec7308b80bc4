import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


def orthonormal_frames(m, c, seed=0):
    q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((c, m)))
    return q.T.copy()


def random_pair(rng, m=8, c=16):
    return rng.standard_normal((m, c)), rng.standard_normal((m, c))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def frames8():
    return orthonormal_frames(8, 16)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    lines = getattr(acceptance, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
