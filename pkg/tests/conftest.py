import numpy as np
import pytest

from gfnoma.config import SimConfig
from gfnoma.phy import LinkBudget


@pytest.fixture
def cfg():
    return SimConfig()


@pytest.fixture
def small_cfg():
    """A light scenario that runs whole episodes in well under a second."""
    return SimConfig(n_ues=300, traffic_total_s=0.05, latency_constraint_ms=8.0)


@pytest.fixture
def link(cfg):
    return LinkBudget.from_config(cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the test summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def accept():
    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
