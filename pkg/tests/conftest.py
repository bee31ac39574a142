import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from signstab.model import DynamicsSpec, Region

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "repo", deadline=None, derandomize=True, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")

TRIAD_F = ["-x1 - x1*x2", "x1^2 - x2 - x2*x3", "x2^2 - x3"]


@pytest.fixture
def triad():
    return DynamicsSpec.from_strings(TRIAD_F)


@pytest.fixture
def omega_box():
    return Region.box(3, -0.9, 3.0, t=(0.0, 10.0))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    def order(key):
        head, _, rest = str(key).partition("[T=")
        return int(head), float(rest.rstrip("]") or 0)

    for key, (ok, detail) in sorted(RESULTS.items(), key=lambda kv: order(kv[0])):
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
