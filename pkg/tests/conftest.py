import numpy as np
import pytest
from hypothesis import strategies as st

from dsdm.params import ActuatorParams


@pytest.fixture(scope="session")
def fitted():
    return ActuatorParams.default()


@pytest.fixture(scope="session")
def undamped(fitted):
    """Fitted parameters with motor-side damping removed."""
    return fitted.with_(b_1=0.0, b_2=0.0)


def log_uniform(lo, hi):
    return st.floats(np.log(lo), np.log(hi)).map(np.exp).map(float)


@st.composite
def actuator_params(draw):
    R1 = draw(st.floats(5.0, 50.0))
    return ActuatorParams(
        R1=R1,
        R2=R1 * draw(st.floats(3.0, 40.0)),
        I_o=draw(log_uniform(1e-4, 1e-1)),
        I_1=draw(log_uniform(1e-7, 1e-5)),
        I_2=draw(log_uniform(1e-7, 1e-5)),
        b_o=draw(st.floats(0.0, 0.05)),
        b_1=draw(st.floats(0.0, 1e-5)),
        b_2=draw(st.floats(0.0, 1e-5)),
    )


speeds = st.floats(-50.0, 50.0)
motor_speeds = st.floats(-500.0, 500.0)


ACCEPTANCE_LINES = []


def report(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
