import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=20,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    # Replay the acceptance verdict lines after capture is released; live
    # prints from inside the tests only reach the console under -s.
    gate = sys.modules.get("test_acceptance")
    verdicts = getattr(gate, "VERDICTS", None)
    if verdicts:
        terminalreporter.section("acceptance gate")
        for line in verdicts:
            terminalreporter.write_line(line)
