import numpy as np
import pytest
from hypothesis import settings

from invfeat.prng import SplitMix64

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return SplitMix64(20240611)


def naive_conjugate(X, perm):
    """result[p(i)][p(j)] = X[i][j], written out entry by entry."""
    X = np.asarray(X)
    n = X.shape[0]
    out = np.zeros_like(X)
    for i in range(n):
        for j in range(n):
            out[perm[i], perm[j]] = X[i, j]
    return out


# one line per acceptance criterion, repeated after the run so it shows without -s
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda ln: ln.split("criterion", 1)[1]):
            terminalreporter.write_line(line)
