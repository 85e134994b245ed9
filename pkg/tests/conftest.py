from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

import helpers

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def ba_fixture(tmp_path_factory):
    """Calibrated BA fixture directory for the 19 table weeks."""
    return helpers.write_ba_fixture(tmp_path_factory.mktemp("ba_fixture"))


ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


@pytest.fixture
def acceptance(request):
    """Record one acceptance criterion; the outcome is printed in the terminal summary."""
    results = request.config.stash[ACCEPTANCE_KEY]

    def record(number: int, title: str, ok: bool, detail: str = "") -> None:
        results.append((number, title, ok, detail))
        assert ok, f"criterion {number} ({title}) failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = sorted(config.stash.get(ACCEPTANCE_KEY, []))
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in results:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number}. {title}" + (f": {detail}" if detail else ""))
