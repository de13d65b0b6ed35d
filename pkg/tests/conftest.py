from pathlib import Path

import pytest

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def nbi_fixture_path() -> Path:
    return DATA_DIR / "nbi_fixture.csv"


@pytest.fixture(scope="session")
def nbi_fixture_records(nbi_fixture_path):
    from bridgecap import nbi

    records, stats = nbi.parse_nbi(nbi_fixture_path.read_bytes(), nbi.standard_profile())
    return records, stats
