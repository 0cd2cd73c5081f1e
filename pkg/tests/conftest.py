import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kernelcg import GramSystem  # noqa: E402

ACCEPTANCE_LINES = []


def gram_of(K, y, kappa=None):
    """Dense GramSystem around an already-normalized matrix."""
    K = np.asarray(K, dtype=float)
    if kappa is None:
        kappa = max(float(np.linalg.eigvalsh(K).max()), 1e-300)
    return GramSystem(y=np.asarray(y, dtype=float), kappa=kappa, n_labeled=len(y), matrix=K)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
