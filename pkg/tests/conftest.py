import numpy as np
import pytest

from layermpc import LayeredMPC, TrackingMPC, build_ladder
from layermpc.systems import double_integrator, unstable_oscillator

# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE_RESULTS = {}


@pytest.fixture(scope="session")
def di_sys():
    return double_integrator()


@pytest.fixture(scope="session")
def osc_sys():
    return unstable_oscillator()


@pytest.fixture(scope="session")
def di_ladder(di_sys):
    return build_ladder(di_sys, 3)


@pytest.fixture(scope="session")
def osc_ladder(osc_sys):
    return build_ladder(osc_sys, 5)


@pytest.fixture(scope="session")
def di_weights():
    return dict(Q=0.5 * np.eye(2), R=2.0 * np.eye(2), T=100.0 * np.eye(2))


@pytest.fixture
def di_layered(di_sys, di_ladder, di_weights):
    return LayeredMPC(N=3, ladder=di_ladder, **di_weights).fit(di_sys)


@pytest.fixture
def di_mpct3(di_sys, di_ladder, di_weights):
    return TrackingMPC(N=3, ladder=di_ladder, **di_weights).fit(di_sys)


@pytest.fixture
def osc_layered(osc_sys, osc_ladder):
    return LayeredMPC(N=5, Q=np.eye(2), R=[[10.0]], T=100 * np.eye(2), ladder=osc_ladder).fit(osc_sys)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: (int("".join(c for c in k if c.isdigit())), k)):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"criterion {key:<4} {'PASS' if ok else 'FAIL'}  {detail}")
