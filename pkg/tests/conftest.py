from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from litmeta.coupling import CouplingGraph  # noqa: E402


def graph_from_dense(w: np.ndarray, prefix: str = "n") -> CouplingGraph:
    """A coupling graph whose normalized weights are the upper triangle of ``w``."""
    n = w.shape[0]
    i, j = np.nonzero(np.triu(w, 1))
    width = len(str(max(n - 1, 0)))
    return CouplingGraph(tuple(f"{prefix}{k:0{width}d}" for k in range(n)),
                         np.ones(n, dtype=np.int64), i.astype(np.int64), j.astype(np.int64),
                         np.maximum(1, np.rint(w[i, j])).astype(np.int64), w[i, j].astype(float))


@pytest.fixture(scope="session")
def full_fixture(tmp_path_factory):
    from litmeta.synthetic import full_scale_fixture

    return full_scale_fixture(tmp_path_factory.mktemp("full_fixture"))


@pytest.fixture
def demo_config(tmp_path):
    from litmeta.cli import copy_demo

    return copy_demo(tmp_path)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
