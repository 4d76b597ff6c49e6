import numpy as np
import pytest

from greedyopt import canonical_dictionary

ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = {}


def record(criterion: int, part: str, passed: bool, detail: str = "") -> bool:
    """Register one sub-check of an acceptance criterion; returns ``passed``."""
    ACCEPTANCE.setdefault(criterion, []).append((part, bool(passed), detail))
    print(f"criterion {criterion} / {part}: {'pass' if passed else 'FAIL'} {detail}")
    return bool(passed)


@pytest.fixture
def D2():
    return canonical_dictionary(2, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[n]
        ok = all(p for _, p, _ in parts)
        detail = "; ".join(f"{name} {'ok' if p else 'FAIL'} ({d})" if d else f"{name} {'ok' if p else 'FAIL'}"
                           for name, p, d in parts)
        terminalreporter.write_line(f"CRITERION {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
