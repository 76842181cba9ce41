import numpy as np
import pytest

from radar_backscatter.encoding import EncodingPlan

# Two subchannels, three tags: rows of the order-4 Hadamard matrix split
# between two pilot blocks and a shared data block.
SHARED_P1 = np.array([[1, 1, 1], [-1, -1, 1], [-1, 1, -1]], dtype=complex)
SHARED_P2 = np.array([[1, -1, -1], [1, 1, 1]], dtype=complex)
SHARED_D0 = np.array([[-1, -1, 1], [-1, 1, -1], [1, -1, -1]], dtype=complex)


@pytest.fixture
def shared_block_plan():
    plan = EncodingPlan(Q=3, L=7, pilots=(SHARED_P1, SHARED_P2), D0=3, Dn=(1, 2), M=2)
    return plan, SHARED_D0.copy()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


# one line per acceptance criterion, repeated at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
