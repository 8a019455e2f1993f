import math

import numpy as np
import pytest

from bayesrob.classifiers import GridClassifier
from bayesrob.distributions import shipped_distribution
from bayesrob.kernels import VicinityKernel

ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_LINES] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance_log(request):
    """Record one PASS/FAIL line for the end-of-run summary (also printed)."""
    lines = request.config.stash[ACCEPTANCE_LINES]

    def log(number, name, ok, detail, seconds):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {name} ({detail}; {seconds:.2f} s)"
        lines.append(line)
        print(line)

    return log


@pytest.fixture(scope="session")
def normals():
    return shipped_distribution("normals_1d")


@pytest.fixture(scope="session")
def step():
    return shipped_distribution("step_1d")


@pytest.fixture(scope="session")
def moons():
    return shipped_distribution("moons_2d")


@pytest.fixture(scope="session")
def linf_015():
    return VicinityKernel(math.inf, 0.15, 1)


@pytest.fixture(scope="session")
def make_step():
    """Factory for the 1-D grid classifier h(x) = 1{x >= at}, judged at cell centres."""

    def make(lo=-2.0, hi=2.0, n=4000, at=0.0):
        h = (hi - lo) / n
        centres = lo + (np.arange(n) + 0.5) * h
        return GridClassifier([(lo, hi)], (n,), (centres >= at).astype(int), 2)

    return make
