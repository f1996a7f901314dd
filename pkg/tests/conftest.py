import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def crand(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_pd(rng, n, scale=1.0):
    A = crand(rng, n, n)
    return scale * (A @ A.conj().T / n + 0.5 * np.eye(n))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
