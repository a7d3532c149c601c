import os

import numpy as np
import pytest

from deepquench.config import load_config

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(ROOT, "configs")


def config_path(name):
    return os.path.join(CONFIGS, name)


@pytest.fixture(scope="session")
def tracking():
    return load_config(config_path("tracking.json"))


@pytest.fixture(scope="session")
def coupled():
    return load_config(config_path("gradient_check_1d.json"))


@pytest.fixture(scope="session")
def contact():
    return load_config(config_path("obstacle_contact.json"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE = {}


def record(number, title, passed, detail):
    if number in ACCEPTANCE:  # parametrised criteria merge into one line
        _, before, text = ACCEPTANCE[number]
        passed, detail = before and passed, f"{text}; {detail}"
    ACCEPTANCE[number] = (title, bool(passed), detail)
    print(f"[criterion {number:2d}] {'PASS' if passed else 'FAIL'}  {title}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{number:2d}] {'PASS' if ok else 'FAIL'}  {title}: {detail}")
