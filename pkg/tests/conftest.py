import numpy as np
import pytest

_ACCEPTANCE = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    label = item.user_properties and dict(item.user_properties).get("criterion")
    if label and report.when == "call":
        detail = dict(item.user_properties).get("detail", "")
        _ACCEPTANCE.append((label, report.passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in sorted(_ACCEPTANCE, key=lambda r: int(r[0].split()[0])):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {label}: {status}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
