from __future__ import annotations

import math

import numpy as np
import pytest


def agree(a, b, k: float = 3.0) -> bool:
    """|a - b| within k combined standard errors (LogEstimate inputs)."""
    se = math.hypot(a.std_error, b.std_error)
    return abs(a.estimate - b.estimate) <= k * se


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
