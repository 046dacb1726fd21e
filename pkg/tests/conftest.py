from pathlib import Path

import pytest

from pitchgrid.cosim.engine import run
from pitchgrid.cosim.scenario import load_scenario

SCENARIOS = Path(__file__).resolve().parents[1] / "src" / "pitchgrid" / "data" / "scenarios"
SHIPPED = sorted(SCENARIOS.glob("*.yaml"))


class RunCache:
    """Session-wide cache so that long shipped-scenario runs happen once."""

    def __init__(self):
        self._runs = {}
        self._reduced = {}

    def __call__(self, name, **overrides):
        key = (name, tuple(sorted(overrides.items())))
        if key not in self._runs:
            sc = load_scenario(SCENARIOS / f"{name}.yaml", overrides=overrides,
                               reduced_cache=self._reduced)
            self._runs[key] = run(sc)
        return self._runs[key]


@pytest.fixture(scope="session")
def shipped_run():
    return RunCache()


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
