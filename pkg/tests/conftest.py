import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("otatti", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("otatti")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
