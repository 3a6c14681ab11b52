import re

import pytest

# (criterion, passed, detail) rows filled by tests/test_acceptance.py
ACCEPTANCE = []


@pytest.fixture()
def record():
    def _record(criterion: str, passed: bool, detail: str):
        ACCEPTANCE.append((criterion, bool(passed), detail))
        print(f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}")
        return passed
    return _record


def _order(row):
    num, rest = re.match(r"(\d+)(.*)", row[0]).groups()
    return int(num), rest


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(ACCEPTANCE, key=_order):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {criterion}: {detail}")
