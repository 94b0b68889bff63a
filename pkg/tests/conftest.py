import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

PROBLEMS = Path(__file__).parent.parent / "problems"


@pytest.fixture(scope="session")
def problems_dir():
    return PROBLEMS
