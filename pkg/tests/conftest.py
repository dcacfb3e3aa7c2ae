import numpy as np
import pytest
from hypothesis import settings

# keep the whole suite deterministic: property tests replay a fixed corpus
settings.register_profile("suite", derandomize=True, deadline=None,
                          max_examples=40)
settings.load_profile("suite")

# acceptance tests append "criterion N [PASS|FAIL] ..." lines here; the
# summary hook prints them even when pytest captures stdout
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
