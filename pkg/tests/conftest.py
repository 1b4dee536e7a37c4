from __future__ import annotations

import pytest

from spdc_lab.config import load_default_config
from spdc_lab.dispersion import load_builtin


@pytest.fixture(scope="session")
def cfg():
    return load_default_config()


@pytest.fixture(scope="session")
def crystal(cfg):
    return cfg.crystal


@pytest.fixture(scope="session")
def sset():
    return load_builtin("congruent_ln")


@pytest.fixture(scope="session")
def t_cal(cfg):
    return cfg.calibration_temperature


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
