import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from opinion_lab.bifurcation import TwoAgentScenario
from opinion_lab.scenario import load_scenario

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def consensus_sc():
    return load_scenario("paper-consensus-6")


@pytest.fixture(scope="session")
def disagreement_sc():
    return load_scenario("paper-disagreement-6")


@pytest.fixture(scope="session")
def hopf_sc():
    return load_scenario("paper-hopf-2")


@pytest.fixture(scope="session")
def hopf_two():
    return TwoAgentScenario.from_values((3, 4), (10, 5), (0, 0), -20, 4.99)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
