import warnings

import numpy as np
import pytest

from imuscale import oracle, pipeline


@pytest.fixture(scope="session")
def default_spec():
    return oracle.default_scenario()


@pytest.fixture(scope="session")
def default_data(default_spec):
    return oracle.generate(default_spec, 0)


@pytest.fixture(scope="session")
def default_result(default_data):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return pipeline.estimate(default_data.poses, default_data.imu)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_rotation(rng):
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    x, y, z, w = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
