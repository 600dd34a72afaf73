from pathlib import Path

import pytest

from chainwatch.encoder import FeatureEncoder
from chainwatch.fingerprints import WhiteList, load_fingerprints

DATA_DIR = Path(__file__).resolve().parent.parent / "src" / "chainwatch" / "data"
FIXTURES = DATA_DIR / "fixtures"

# Filled in by tests/test_acceptance.py; printed after the run so the
# verdict for every criterion shows up in one block.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def encoder() -> FeatureEncoder:
    return FeatureEncoder.from_paths()


@pytest.fixture(scope="session")
def vocabs(encoder):
    return encoder.vocabs


@pytest.fixture(scope="session")
def sql_db(encoder):
    return load_fingerprints(FIXTURES / "sqlinj.fp", encoder)


@pytest.fixture(scope="session")
def whitelist():
    return WhiteList.from_file(FIXTURES / "whitelist.txt")


@pytest.fixture(scope="session")
def small_world(encoder):
    from chainwatch.synthgen import make_world

    return make_world(n_exploits=6, seed=424, encoder=encoder, benign_count=12)


@pytest.fixture(scope="session")
def small_db(small_world, encoder):
    return small_world.db(encoder)
