import numpy as np
import pytest

from arvaopt.market import BASE_MARKET


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def base_market():
    return BASE_MARKET


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, recorded by tests/test_acceptance.py."""
    lines = []
    for reports in terminalreporter.stats.values():
        for rep in reports:
            for name, value in getattr(rep, "user_properties", ()):
                if name == "criterion" and getattr(rep, "when", "call") == "call":
                    lines.append(value)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: (int(s.split()[1].rstrip("ab:")), s)):
            terminalreporter.write_line(line)
