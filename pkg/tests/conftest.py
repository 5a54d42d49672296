import pytest

from kerrsim.circuit import kerr_coefficients, reference_params
from kerrsim.config import Experiment, loads
from kerrsim.dynamics import ThermalEnvironment


@pytest.fixture(scope="session")
def params():
    return reference_params()


@pytest.fixture(scope="session")
def spectrum(params):
    return kerr_coefficients(params, 0.0)


@pytest.fixture(scope="session")
def env(spectrum):
    return ThermalEnvironment(8e-3, spectrum.nu(3))


@pytest.fixture(scope="session")
def experiment():
    return Experiment(loads(""))


@pytest.fixture(scope="session")
def model(experiment):
    return experiment.model()


# Verdict lines collected by the acceptance tests, repeated in the terminal summary.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
