"""Default filesystem locations."""

from os import getenv
from pathlib import Path

DATA_DIR = Path(getenv("MASKDB_DATA_DIR", Path.home() / ".maskdb"))
KEYS_DIR = DATA_DIR / "keys"
STORE_DIR = DATA_DIR / "store"
PACKAGE_DIR = Path(__file__).parent
DEFAULT_LATENCY_TABLE = PACKAGE_DIR / "crypto" / "latency.json"
