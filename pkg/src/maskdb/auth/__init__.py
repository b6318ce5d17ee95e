"""Owner keys, delegation tokens and the server keyring."""
from maskdb.auth.keyring import Keyring
from maskdb.auth.keyring import OwnerRecord
from maskdb.auth.keyring import sign_registration
from maskdb.auth.tokens import create_token
from maskdb.auth.tokens import delegate
from maskdb.auth.tokens import DelegationToken
from maskdb.auth.tokens import NonceCache
from maskdb.auth.tokens import OwnerKeypair
from maskdb.auth.tokens import Permission
from maskdb.auth.tokens import verify_token

__all__ = [
    "DelegationToken",
    "Keyring",
    "NonceCache",
    "OwnerKeypair",
    "OwnerRecord",
    "Permission",
    "create_token",
    "delegate",
    "sign_registration",
    "verify_token",
]
