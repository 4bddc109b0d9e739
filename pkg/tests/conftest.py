import numpy as np
import pytest

from monofam import (
    TimeGrid,
    build_affine_composition,
    build_nested_lq,
    build_sup_counterexample,
    build_weighted_hilbert,
)

ACCEPTANCE_LINES = []


def shrinking(t):
    return 1.0 - t / 2.0


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def families():
    g = TimeGrid.uniform(32)
    return {
        "nested_lq": build_nested_lq(shrinking, 2.0, 48, g),
        "sup_counterexample": build_sup_counterexample(48, g),
        "affine_composition": build_affine_composition(48, g),
        "weighted_hilbert": build_weighted_hilbert(48, g),
    }


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
