"""Shared fixtures and the acceptance-line reporter."""

import numpy as np
import pytest
from hypothesis import settings

from spatcount.model import PriorSpec, TrapArray
from spatcount.simulate import Scenario

settings.register_profile("suite", deadline=None, print_blob=True)
settings.load_profile("suite")

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    status = "PASS" if passed else "FAIL"
    ACCEPTANCE_LINES.append(f"CRITERION {number:02d}: {status} - {detail}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def unit_traps():
    return TrapArray.grid(3, 3, spacing=1.0)


@pytest.fixture(scope="session")
def tiny_scenario(unit_traps):
    return Scenario(traps=unit_traps, buffer=2.0, sigma=0.5, lambda0=0.5,
                    N_true=6, T=4, seed=0, name="tiny")


@pytest.fixture(scope="session")
def default_priors():
    return PriorSpec()


@pytest.fixture()
def rng():
    return np.random.default_rng(2024)
