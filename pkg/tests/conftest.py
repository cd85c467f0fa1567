import sys
from pathlib import Path

# Test-local helpers (oracle_utils) live next to the tests.
sys.path.insert(0, str(Path(__file__).parent))


def pytest_addoption(parser):
    parser.addoption(
        "--update-goldens", action="store_true", default=False,
        help="rewrite golden output files instead of comparing",
    )
