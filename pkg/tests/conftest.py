import pytest

# Acceptance outcomes, filled in by test_acceptance.py and printed at the end.
ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    def record(name, ok, detail=""):
        ACCEPTANCE[name] = (bool(ok), detail)
        line = f"{name}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{name}: {'PASS' if ok else 'FAIL'}  {detail}")
