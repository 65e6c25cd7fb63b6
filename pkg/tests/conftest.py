import numpy as np
import pytest

from qfubqc.rng import stream

# criterion -> (verdict, detail); filled by test_acceptance, printed at the end
ACCEPTANCE: dict[str, tuple[str, str]] = {}


def record(criterion: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}"
    ACCEPTANCE[criterion] = (line, detail)
    print(f"[acceptance] criterion {criterion}: {line} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")

    def order(k):
        head = k.split()[0]
        return (int(head) if head.isdigit() else 99, k)

    for key in sorted(ACCEPTANCE, key=order):
        verdict, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {verdict} - {detail}")


@pytest.fixture
def rng():
    return stream(20240611)


@pytest.fixture
def make_rng():
    def make(*path):
        return stream(97, *path)
    return make


def sigma3(p: float, n: int) -> float:
    return 3 * np.sqrt(p * (1 - p) / n)
