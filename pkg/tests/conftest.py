import pytest

# (number, passed, detail) rows recorded by tests/test_acceptance.py
ACCEPTANCE: list[tuple[int, bool, str]] = []


@pytest.fixture
def criterion():
    def record(number: int, passed: bool, detail: str) -> bool:
        ACCEPTANCE.append((number, bool(passed), detail))
        print(f"CRITERION {number}: {'PASS' if passed else 'FAIL'} ({detail})")
        return bool(passed)
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"CRITERION {number}: {'PASS' if passed else 'FAIL'} ({detail})")
