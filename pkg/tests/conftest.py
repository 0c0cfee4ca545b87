from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dollda.synthetic import make_synthetic

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_task():
    """A 3-class, 8-feature task small enough for per-test fits."""
    return make_synthetic(seed=3, n_per_class=12, class_count=3, dim=8)


def random_labels(rng, n: int, class_count: int) -> np.ndarray:
    """1-based labels covering every class at least once."""
    labels = rng.integers(1, class_count + 1, size=n)
    labels[:class_count] = np.arange(1, class_count + 1)
    return rng.permutation(labels)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
