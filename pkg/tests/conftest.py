import numpy as np
import pytest

from stxtreme.correlation import ExpCorrParams, GneitingCorrParams
from stxtreme.model import SchlatherModelParams
from stxtreme.randomset import CylinderSetParams, IntervalSetParams

# storm and correlation values on the scale of hourly rainfall (km, hours)
STORM = CylinderSetParams(m_R=51.21, k_R=0.28, m_V1=32.67, m_V2=11.41,
                          var_V1=3.00**2, var_V2=3.43**2, rho_V=-0.95,
                          m_D=36.78, k_D=9.75)
GNEITING = GneitingCorrParams(alpha_s=np.log(35.5), alpha_t=0.0, beta_s=0.98,
                              beta_t=1.0, gamma=0.99)

# one-dimensional design: exponential correlation with range 4, mean duration 40/3
LAM_1D = 4.0
MU_1D = 40.0 / 3.0


@pytest.fixture(scope="session")
def storm():
    return STORM


@pytest.fixture(scope="session")
def spacetime_model():
    return SchlatherModelParams(GNEITING, STORM)


@pytest.fixture(scope="session")
def model_1d():
    return SchlatherModelParams(ExpCorrParams(LAM_1D), IntervalSetParams(MU_1D))


# ---------------------------------------------------------------- acceptance report

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("detail", "")
        _ACCEPTANCE[report.nodeid] = (report.outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, (outcome, detail) in sorted(_ACCEPTANCE.items()):
        name = nodeid.split("::")[-1].removeprefix("test_")
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}  {name}  {detail}")
