import numpy as np
import pytest

from dyadrl.env_model import DyadParams, generate_population
from dyadrl.env_model.dynamics import initial_state


@pytest.fixture
def params():
    return DyadParams(am_b0=0.8, pm_b0=0.7, am_b1=0.3, pm_b1=0.3, am_b2=0.3, pm_b2=0.3,
                      care_b1=0.5, care_b3=-0.3, rel_b0=-1.0, rel_b1=1.0, rel_b2=0.1, rel_b3=-0.3,
                      aya_mean=11.7, aya_sd=6.2, care_mean=6.3, care_sd=4.1)


@pytest.fixture
def small_pop():
    pop = generate_population(5, 12)
    # burden scaling close to the calibrated values, without paying for calibration
    return pop.replace(aya_mean=11.7, aya_sd=6.2, care_mean=6.3, care_sd=4.1)


@pytest.fixture
def start(params):
    return initial_state(params, np.random.default_rng(0), n_lanes=3)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
