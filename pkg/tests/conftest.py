import json
from pathlib import Path

import numpy as np
import pytest

from gbdml.d2d import D2DInstance, D2DProblem
from gbdml.synthetic import SyntheticProblem, tiny_instance

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def golden():
    with open(DATA / "golden_d2d_seed42_k4_l2.json") as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def golden_instance(golden):
    return D2DInstance.from_dict(golden["instance"])


@pytest.fixture
def golden_problem(golden_instance):
    return D2DProblem(golden_instance)


@pytest.fixture
def tiny_problem():
    return SyntheticProblem(tiny_instance())


def brute_eta(cuts_C, cuts_c0, ys, floor=-1e12):
    """eta*(y) for every row of ys straight from the cut list."""
    if len(cuts_c0) == 0:
        return np.full(len(ys), floor)
    return np.array([max(float(np.dot(c, y)) + c0 for c, c0 in zip(cuts_C, cuts_c0)) for y in ys])


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
