import json
from pathlib import Path

import pytest

FIXTURES_PATH = Path(__file__).parent / "fixtures" / "oracle_fixtures.json"


@pytest.fixture(scope="session")
def oracle_fixtures() -> dict:
    return json.loads(FIXTURES_PATH.read_text())
