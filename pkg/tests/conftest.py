import numpy as np
import pytest

from dynagg.sim_env import ChurnEvent

# criterion label -> (passed, detail); filled by the acceptance tests
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def report():
    def _report(label: str, passed: bool, detail: str) -> bool:
        ACCEPTANCE[label] = (bool(passed), detail)
        return passed

    return _report


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def half_random():
    return [ChurnEvent(20, "remove", "random", 0.5)]


def _label_key(label: str):
    head = label.split()[0]
    return (int(head) if head.isdigit() else 99, label)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(ACCEPTANCE, key=_label_key):
        passed, detail = ACCEPTANCE[label]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  criterion {label}: {detail}")
