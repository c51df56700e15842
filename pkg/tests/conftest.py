import os
import sys

import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

from jumpflow.model import builtin_model  # noqa: E402
from oracles import CIR_JUMP_PARAMS, CIR_PARAMS, LEVY_PARAMS  # noqa: E402


@pytest.fixture(scope="session")
def cir():
    return builtin_model("cir", CIR_PARAMS)


@pytest.fixture(scope="session")
def cir_jump():
    return builtin_model("cir_jump", CIR_JUMP_PARAMS)


@pytest.fixture(scope="session")
def levy():
    return builtin_model("levy_onesided", LEVY_PARAMS)


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    return request.param


ACCEPTANCE_LINES = []


def record_acceptance(label: str, passed: bool, detail: str) -> str:
    line = f"{label} {'PASS' if passed else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
