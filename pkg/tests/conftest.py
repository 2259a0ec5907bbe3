import warnings

import numpy as np
import pytest

from uree.simulation import load_appendix_b
from uree.study import load_ulmca


@pytest.fixture(scope="session")
def ulmca():
    return load_ulmca()


@pytest.fixture(scope="session")
def appendix_b():
    return load_appendix_b()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield


FULL_SCHEDULE = dict(chains=3, burn_in=2000, iterations=100000, thin=10, threads=3)
_FITS: dict = {}


def cached_fit(key, build):
    """Run ``build()`` once per test session; heavy MCMC fits are shared across modules."""
    if key not in _FITS:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            _FITS[key] = build()
    return _FITS[key]


@pytest.fixture(scope="session")
def fits():
    return cached_fit


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
