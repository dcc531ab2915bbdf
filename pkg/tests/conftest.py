import sys

import pytest

from attcal.presets import device_scenario, device_thermal_model


@pytest.fixture
def device_tm():
    return device_thermal_model()


@pytest.fixture
def scenario():
    return device_scenario(seed=11, bulkhead=False)


@pytest.fixture
def scenario_bulkhead():
    return device_scenario(seed=11, bulkhead=True)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
