import numpy as np
import pytest

from dualrail.fock import DensityMatrix


def random_density(rng, cutoff, rank=None):
    """Random full- or low-rank two-mode state."""
    d = (cutoff + 1) ** 2
    k = rank or d
    g = rng.normal(size=(d, k)) + 1j * rng.normal(size=(d, k))
    m = g @ g.conj().T
    return DensityMatrix.from_array(m, cutoff)


def random_product(rng, cutoff):
    """rho_A (x) rho_B with independent random single-mode factors."""
    c = cutoff + 1
    facs = []
    for _ in range(2):
        g = rng.normal(size=(c, c)) + 1j * rng.normal(size=(c, c))
        m = g @ g.conj().T
        facs.append(m / np.trace(m).real)
    return DensityMatrix.from_array(np.kron(*facs), cutoff)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
