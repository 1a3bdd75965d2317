"""Shared fixtures: small instances and a per-criterion verdict log."""
from __future__ import annotations

import numpy as np
import pytest

from homecare.instance import build_geometry, default_instance, make_instance, make_service

VERDICTS: dict[int, tuple[bool, str]] = {}


class Verdict:
    """Collects the outcome of one acceptance criterion; unset means it did not finish."""

    def __init__(self, number: int):
        self.number = number
        self.detail = ""

    def note(self, text: str):
        self.detail = text

    def check(self, ok: bool, text: str):
        self.detail = text
        VERDICTS[self.number] = (bool(ok), text)
        assert ok, text


@pytest.fixture
def criterion(request):
    number = request.node.get_closest_marker("criterion").args[0]
    v = Verdict(number)
    yield v
    if number not in VERDICTS:
        VERDICTS[number] = (False, v.detail or "did not complete")



def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(VERDICTS):
        ok, text = VERDICTS[n]
        tr.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {text}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_instance():
    """Six regions, one care type with a three-day wait target and some overtime."""
    g = build_geometry("rectangular", rows=2, cols=3, diameter=0.6)
    return make_instance(g, [make_service(1, 0.5, 3, "poisson", 4, 8)], target_demand=8.0,
                         chi_prime=1.0, gamma=0.95, x_max=12, y_max=12)


@pytest.fixture(scope="session")
def two_type_instance():
    g = build_geometry("circular", rings=1, diameter=0.6)
    return make_instance(g, [make_service(1, 0.5, 3, "poisson", 3, 6),
                             make_service(2, 1.0, 2, "poisson", 2, 4)],
                         target_demand=8.0, gamma=0.95, x_max=10, y_max=10)


@pytest.fixture(scope="session")
def desk_instance():
    """Six-region analogue of the default single-type instance."""
    return default_instance(geometry={"shape": "rectangular", "rows": 2, "cols": 3,
                                      "diameter_h": 0.5})
