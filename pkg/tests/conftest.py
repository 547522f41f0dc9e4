import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_vectors(rng, m, lo=1e-4, hi=1e2):
    r = np.exp(rng.uniform(np.log(lo), np.log(hi), m))
    th = rng.uniform(0.0, 2.0 * np.pi, m)
    return r[:, None] * np.stack([np.cos(th), np.sin(th)], axis=-1)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import ACCEPTANCE_LINES
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
