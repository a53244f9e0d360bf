import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# the toy dataset used throughout: ten keys with very different weights
EX1 = {"u1": 5.0, "u3": 100.0, "u10": 23.0, "u12": 7.0, "u17": 1.0,
       "u24": 5.0, "u31": 220.0, "u42": 19.0, "u43": 3.0, "u55": 2.0}
EX1_SEGMENT = {"u3", "u12", "u42", "u55"}

# reference two-decimal pps probabilities for k=3
EX2_TABLE = {
    "sum": [0.04, 0.78, 0.18, 0.05, 0.01, 0.04, 1.00, 0.15, 0.02, 0.02],
    "thresh:10": [0.00, 0.75, 0.75, 0.00, 0.00, 0.00, 0.75, 0.75, 0.00, 0.00],
    "cap:5": [0.37, 0.37, 0.37, 0.37, 0.07, 0.37, 0.37, 0.37, 0.22, 0.15],
}
EX2_KEYS = ["u1", "u3", "u10", "u12", "u17", "u24", "u31", "u42", "u43", "u55"]


@pytest.fixture
def ex1():
    return dict(EX1)


@pytest.fixture
def ex1_tsv(tmp_path):
    p = tmp_path / "ex1.tsv"
    p.write_text("".join(f"{k}\t{w:g}\n" for k, w in EX1.items()))
    return p


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 13):
        ok, detail = ACCEPTANCE.get(n, (False, "not run"))
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {n:2d}: {detail}")
