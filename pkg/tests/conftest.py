import os
from pathlib import Path

import pytest

from fbquant.direction import CACHE_ENV, CodebookCache

REPO = Path(__file__).resolve().parent.parent
# packings are slow to generate; keep them between runs
ACCEPTANCE_CACHE = Path(os.environ.get(CACHE_ENV) or REPO / ".fbquant-cache")

# filled by test_acceptance, printed at the end of the run
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance_cache():
    return CodebookCache(ACCEPTANCE_CACHE)


@pytest.fixture(scope="session")
def quick_cache(tmp_path_factory):
    """Cheap packings for unit tests."""
    return CodebookCache(tmp_path_factory.mktemp("packings"), restarts=1, iterations=60)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
