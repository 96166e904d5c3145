import pathlib

import numpy as np
import pytest

from mrwave import read_netlist

DATA = pathlib.Path(__file__).parent / "data"

_ACCEPTANCE = {}


def netlist_path(name: str) -> pathlib.Path:
    return DATA / name


def load(name: str):
    return read_netlist(DATA / name)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def acceptance_log():
    """Criterion number -> (passed, detail), printed in the terminal summary."""
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
