import functools
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from randtmc.config import build, fixture  # noqa: E402

BERNOULLI = {"generator": "bernoulli", "probs": [0.3, 0.7]}


@functools.lru_cache(maxsize=None)
def experiment(name: str, variant: str = ""):
    """Built fixture; ``variant="bernoulli"`` gives FS2 with weights (0.3, 0.7)."""
    if variant == "bernoulli":
        return build(fixture(name, potential=BERNOULLI))
    return build(fixture(name))


@pytest.fixture
def fs2():
    return experiment("FS2")


@pytest.fixture
def fs2b():
    return experiment("FS2", "bernoulli")


@pytest.fixture
def gm():
    return experiment("GM")


@pytest.fixture
def geo():
    return experiment("GEO")


@pytest.fixture
def p2():
    return experiment("P2")


@pytest.fixture
def ds3():
    return experiment("DS3")


@pytest.fixture
def nobip():
    return experiment("NOBIP")


# -- acceptance summary ----------------------------------------------------

_ACCEPTANCE: dict = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and report.when == "call":
        _ACCEPTANCE[report.nodeid] = report.outcome
    elif "test_acceptance.py" in report.nodeid and report.when == "setup" and report.outcome != "passed":
        _ACCEPTANCE[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, outcome in sorted(_ACCEPTANCE.items(), key=lambda kv: _criterion_key(kv[0])):
        name = nodeid.split("::")[-1]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}")


def _criterion_key(nodeid: str):
    name = nodeid.split("::")[-1]
    digits = "".join(ch for ch in name.split("_")[1] if ch.isdigit()) if "_" in name else ""
    return (int(digits) if digits else 99, name)
