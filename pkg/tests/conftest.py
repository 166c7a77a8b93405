import pytest

from dexplan.planner import plan
from dexplan.scenario import load_scenario

# verdict lines from test_acceptance.py, replayed after the test summary so
# they stay visible without -s
ACCEPTANCE_LINES = []


def record_verdict(tag: str, ok: bool, detail: str) -> bool:
    line = f"[{tag}] {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance checks")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def card_plan():
    """One solved card run shared by the file, planner, and CLI tests."""
    tf, stats = plan(load_scenario("card"), seed=0)
    assert tf is not None and stats.success
    return tf, stats
