import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from surfdist import synthetic as syn
from surfdist.flatten import flatten
from surfdist.mesh import normalize_mesh

warnings.filterwarnings("ignore", message="The TBB threading layer")

settings.register_profile(
    "surfdist", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("surfdist")


@pytest.fixture(scope="session")
def disk():
    return syn.unit_disk(8)


@pytest.fixture(scope="session")
def cap():
    return normalize_mesh(syn.spherical_cap(10, height=0.4))


@pytest.fixture(scope="session")
def cap_flat(cap):
    return flatten(cap)


@pytest.fixture(scope="session")
def bumpy():
    """Small two-bump surface with unit area."""
    return normalize_mesh(syn.family_shape("double", 0, n_rings=10))


@pytest.fixture(scope="session")
def bumpy_flat(bumpy):
    return flatten(bumpy)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            name = rep.nodeid.rsplit("::", 1)[-1]
            if rep.when != "call" or not name.startswith("test_criterion_"):
                continue
            number = int(name.split("_")[2])
            detail = "; ".join(str(v) for k, v in rep.user_properties if k == "measured")
            lines.append((number, f"criterion {number:2d}: {'PASS' if outcome == 'passed' else 'FAIL'}  {detail}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
