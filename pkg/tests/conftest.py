import os

import pytest
from hypothesis import HealthCheck, settings

from polling_tandem import _accel
from polling_tandem.model import ModelParams, TruncationConfig, symmetric_params

settings.register_profile(
    "default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def table3_row1() -> ModelParams:
    return symmetric_params(1.0, 4.0, 1.0)


@pytest.fixture
def small_caps() -> TruncationConfig:
    return TruncationConfig(queue_cap_ss1=12, queue_cap_ss2_st1=8, queue_cap_ss2_st2=8,
                            pmf_cap=64, auto_grow=False)


@pytest.fixture(params=[True, False], ids=["numba", "numpy"])
def accel_mode(request):
    old = _accel.use_numba()
    _accel.set_use_numba(request.param)
    yield request.param
    _accel.set_use_numba(old)


ACCEPTANCE: dict[int, str] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    """Log one acceptance line; printed now and again in the terminal summary."""
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE[criterion] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
