import numpy as np
import pytest

from roadgen.geometry import RoadGenome


def genome_of(values, n=50):
    values = np.broadcast_to(np.asarray(values, dtype=float), (n,))
    return RoadGenome.from_curvatures(values)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance verdicts, filled by test_acceptance and echoed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
