from importlib import resources

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fracfact.design import build_design_matrix, load_design
from fracfact.glm import load_data
from fracfact.model import build_covariate_matrix, load_model

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DATA = resources.files("fracfact") / "data"

# acceptance lines collected during the run, printed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])


def bundle(name: str):
    spec = load_design(DATA / f"{name}.design")
    model = load_model(DATA / f"{name}.model")
    X0 = build_covariate_matrix(build_design_matrix(spec), model)
    y, n = load_data(DATA / f"{name}.data")
    return spec, model, X0, y, n


@pytest.fixture(scope="session")
def wavesolder():
    return bundle("wavesolder")


@pytest.fixture(scope="session")
def windshield():
    return bundle("windshield")


@pytest.fixture(scope="session")
def data_dir():
    return DATA


# 2^{5-2} design D=AB, E=AC, main effects: the 6 x 8 matrix of the conditional independence example
X0T_5_2 = np.array(
    [
        [1, 1, 1, 1, 1, 1, 1, 1],
        [1, 1, 1, 1, -1, -1, -1, -1],
        [1, 1, -1, -1, 1, 1, -1, -1],
        [1, -1, 1, -1, 1, -1, 1, -1],
        [1, 1, -1, -1, -1, -1, 1, 1],
        [1, -1, 1, -1, -1, 1, -1, 1],
    ]
)
