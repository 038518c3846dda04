import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lateral_ukf.vehicle import PacejkaAxleParams, TireParamSet, VehicleParams, default_tires  # noqa: E402


@pytest.fixture
def vp():
    return VehicleParams()


@pytest.fixture
def tires():
    return default_tires()


@pytest.fixture
def zero_sv_tires():
    front = PacejkaAxleParams(mu=1.6, B=10.0, C=1.5, E=0.5, Sv=0.0)
    rear = PacejkaAxleParams(mu=1.7, B=12.0, C=1.5, E=0.4, Sv=0.0)
    return TireParamSet.symmetric(front, rear)


_VERDICTS = []


@pytest.fixture
def verdict(capsys):
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def record(name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {name}  {detail}".rstrip()
        _VERDICTS.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
