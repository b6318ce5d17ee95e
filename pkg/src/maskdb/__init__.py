"""maskdb - SQL over homomorphic ciphertexts with masked selection."""

from maskdb.auth.keyring import Keyring
from maskdb.auth.tokens import OwnerKeypair
from maskdb.auth.tokens import Permission
from maskdb.client.session import ClientSession
from maskdb.client.transport import LocalTransport
from maskdb.client.transport import SocketTransport
from maskdb.config import Settings
from maskdb.crypto.base import Backend
from maskdb.engine.executor import QueryEngine
from maskdb.exceptions import MaskdbError
from maskdb.storage.hybrid import HybridStore
from maskdb.types import ColumnDef
from maskdb.version import __version__

__all__ = [
    "__version__",
    "Backend",
    "ClientSession",
    "ColumnDef",
    "HybridStore",
    "Keyring",
    "LocalTransport",
    "MaskdbError",
    "OwnerKeypair",
    "Permission",
    "QueryEngine",
    "Settings",
    "SocketTransport",
]
