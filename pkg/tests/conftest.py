import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dnaengine import ann
from dnaengine.data import load_builtin_digits

settings.register_profile("ci", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


@pytest.fixture(scope="session")
def digits():
    return load_builtin_digits()


@pytest.fixture(scope="session")
def digits_split(digits):
    return digits.split(400, 0)


@pytest.fixture(scope="session")
def trained(digits_split):
    train_set, _ = digits_split
    return ann.train(train_set, ann.TrainConfig(), seed=0)


@pytest.fixture(scope="session")
def trained_spec(trained):
    return ann.to_spec(trained)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(12345))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
