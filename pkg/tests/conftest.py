import os
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
CASES = Path(os.environ.get("POLICYTRIAL_CASES", ROOT / "data" / "us-states.csv"))
POLICY = Path(os.environ.get("POLICYTRIAL_POLICY", ROOT / "data" / "policy_dates.csv"))

_acceptance = []


@pytest.fixture
def policy_path():
    return POLICY


@pytest.fixture
def cases_path():
    if not CASES.exists():
        pytest.fail(
            f"case-count fixture {CASES} is missing; run scripts/fetch_nyt_cases.py "
            "(needs network) or set POLICYTRIAL_CASES"
        )
    return CASES


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _acceptance.append((marker.args[0], "PASS" if rep.passed else "FAIL"))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for label, status in sorted(_acceptance, key=lambda x: int(x[0].split()[0][2:])):
        terminalreporter.write_line(f"{status}  {label}")
