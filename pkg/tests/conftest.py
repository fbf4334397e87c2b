import pytest

from impulsive_geodesics import config, scenarios


def load(name, **changes):
    """Resolve a shipped scenario, with top-level keys replaced by ``changes``."""
    raw = scenarios.get(name)
    raw.update(changes)
    return config.resolve(raw)


@pytest.fixture(scope="session")
def flat():
    return load("flat-quadratic")


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
