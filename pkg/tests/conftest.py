import numpy as np
import pytest

from mtspec.tapers import FrequencyGrid, LogSpectralEstimate


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def noiseless_estimates(theta, n, k=20):
    """Exact log-spectrum values presented as the two pipeline inputs."""
    fine = FrequencyGrid.canonical(n)
    coarse = FrequencyGrid(2 * fine.spacing, (fine.size + 1) // 2)

    def wrap(grid, kk, var):
        v = np.asarray(theta(grid.frequencies), dtype=float)
        return LogSpectralEstimate(grid, v, kk, n, 0.0, np.zeros(v.size), np.full(v.size, var))

    return wrap(coarse, 1, np.pi**2 / 6), wrap(fine, k, 1.0 / k)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion; returns ``ok``."""

    def record(number, title, ok, detail):
        line = f"criterion {number:>2} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
