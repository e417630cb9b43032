import numpy as np
import pytest

from hybridfl.nn_core import Architecture, ExampleBatch, init_model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_batch(rng, n, dim, n_classes):
    return ExampleBatch(rng.standard_normal((n, dim)), rng.integers(0, n_classes, size=n))


def random_model(arch_sizes, seed, activation="relu"):
    return init_model(Architecture(tuple(arch_sizes), activation), seed)


def central_difference(f, x, idx, h=1e-5):
    """Central finite difference of scalar ``f`` at ``x`` along the coordinates ``idx``."""
    out = np.empty(len(idx))
    for j, i in enumerate(idx):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        out[j] = (f(xp) - f(xm)) / (2 * h)
    return out


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
