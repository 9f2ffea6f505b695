import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from corpus import coin_lamp_source  # noqa: E402

from pecmdp import compile_domain, parse_domain  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def coin_lamp():
    return parse_domain(coin_lamp_source())


@pytest.fixture(scope="session")
def coin_mdp(coin_lamp):
    return compile_domain(coin_lamp)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
