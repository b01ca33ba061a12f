from __future__ import annotations

import pytest
from hypothesis import settings

from skillscale import fixtures

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def synthetic_docs():
    return fixtures.synthetic_documents()


@pytest.fixture(scope="session")
def synthetic_lib():
    return fixtures.synthetic_library()


@pytest.fixture()
def intervention_lib():
    return fixtures.intervention_library()


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
