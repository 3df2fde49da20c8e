import numpy as np
import pytest

from cpshave.experiments import case_instances

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion."""

    def record(name: str, ok: bool, detail: str) -> None:
        _ACCEPTANCE.append((name, bool(ok), detail))
        print(f"{name}: {'PASS' if ok else 'FAIL'} | {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"{name}: {'PASS' if ok else 'FAIL'} | {detail}")


@pytest.fixture(scope="session")
def cases():
    return case_instances()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
