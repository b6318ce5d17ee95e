"""Server-side registry of owners and their public key material."""
from __future__ import annotations

import base64
import json
import logging
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Dict
from typing import FrozenSet
from typing import Iterator
from typing import Optional

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PublicKey,
)

from maskdb.auth.tokens import DelegationToken
from maskdb.auth.tokens import NonceCache
from maskdb.auth.tokens import owner_id_for
from maskdb.auth.tokens import OwnerKeypair
from maskdb.auth.tokens import Permission
from maskdb.auth.tokens import require
from maskdb.auth.tokens import verify_token
from maskdb.crypto.types import KeyMaterial
from maskdb.exceptions import AuthorizationError
from maskdb.exceptions import BadSignatureError

logger = logging.getLogger(__name__)

KEYRING_FILE = "owners.json"
_REGISTER_DOMAIN = b"maskdb-register\x00"


def registration_message(
    verification_key: bytes, key_material: Optional[KeyMaterial]
) -> bytes:
    """Bytes an owner signs to prove it holds its signing key.

    Args:
        verification_key: raw public signing key.
        key_material: public homomorphic keys, if any.

    Returns:
        The message.

    """
    fingerprint = b"" if key_material is None else key_material.fingerprint
    return _REGISTER_DOMAIN + verification_key + fingerprint


def sign_registration(
    keypair: OwnerKeypair, key_material: Optional[KeyMaterial]
) -> bytes:
    """Proof of possession for :meth:`Keyring.register`.

    Args:
        keypair: the owner's signing key.
        key_material: keys being registered alongside.

    Returns:
        The signature.

    """
    return keypair.sign(
        registration_message(keypair.verification_key, key_material)
    )


@dataclass(frozen=True)
class OwnerRecord:
    """What the server knows about one owner."""

    owner_id: str
    verification_key: bytes
    key_material: Optional[KeyMaterial] = None

    def to_dict(self) -> dict:  # noqa: D102
        return {
            "owner_id": self.owner_id,
            "verification_key": base64.b64encode(
                self.verification_key
            ).decode("ascii"),
            "key_material": None
            if self.key_material is None
            else self.key_material.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> OwnerRecord:  # noqa: D102
        material = data.get("key_material")
        return cls(
            owner_id=data["owner_id"],
            verification_key=base64.b64decode(data["verification_key"]),
            key_material=None
            if material is None
            else KeyMaterial.from_dict(material),
        )


class Keyring:
    """Owner id -> verification key (and public FHE keys).

    Owner ids are derived from the verification key, so registering a
    key never lets anyone speak for another owner.

    """

    def __init__(self, path: Optional[Path] = None) -> None:
        """Load the registry, or start an empty in-memory one.

        Args:
            path: JSON file; ``None`` keeps the registry in memory.

        """
        self.path = None if path is None else Path(path)
        self._owners: Dict[str, OwnerRecord] = {}
        self._lock = threading.Lock()
        self.nonces = NonceCache()
        if self.path is not None and self.path.exists():
            for item in json.loads(self.path.read_text()):
                record = OwnerRecord.from_dict(item)
                self._owners[record.owner_id] = record
            logger.info("Loaded %d owners from %s", len(self), self.path)

    def __len__(self) -> int:
        return len(self._owners)

    def __iter__(self) -> Iterator[OwnerRecord]:
        return iter(list(self._owners.values()))

    def __contains__(self, owner_id: str) -> bool:
        return owner_id in self._owners

    def register(
        self,
        verification_key: bytes,
        key_material: Optional[KeyMaterial] = None,
        proof: Optional[bytes] = None,
    ) -> OwnerRecord:
        """Add or refresh an owner.

        Args:
            verification_key: raw Ed25519 public key.
            key_material: public homomorphic keys; secrets are dropped.
            proof: signature from :func:`sign_registration`; required
                when given over the network.

        Returns:
            The stored record.

        Raises:
            BadSignatureError: the proof does not verify.

        """
        public = None if key_material is None else key_material.public()
        if proof is not None:
            try:
                Ed25519PublicKey.from_public_bytes(verification_key).verify(
                    proof, registration_message(verification_key, public)
                )
            except (InvalidSignature, ValueError) as exc:
                raise BadSignatureError(
                    "Registration proof does not verify"
                ) from exc
        record = OwnerRecord(
            owner_id_for(verification_key), verification_key, public
        )
        with self._lock:
            self._owners[record.owner_id] = record
            self._save()
        logger.info("Registered owner %s", record.owner_id)
        return record

    def get(self, owner_id: str) -> OwnerRecord:
        """Look an owner up.

        Args:
            owner_id: owner identifier.

        Returns:
            Its record.

        Raises:
            AuthorizationError: unknown owner.

        """
        try:
            return self._owners[owner_id]
        except KeyError:
            raise AuthorizationError(f"Unknown owner '{owner_id}'") from None

    def authorize(
        self,
        token: DelegationToken,
        needed: Permission,
        now: Optional[float] = None,
    ) -> FrozenSet[Permission]:
        """Verify a token against its owner and demand one right.

        Args:
            token: presented token.
            needed: the right the request exercises.
            now: current time override.

        Returns:
            The granted permissions.

        """
        record = self.get(token.owner_id)
        granted = verify_token(
            token, record.verification_key, now, self.nonces
        )
        require(granted, needed)
        return granted

    def _save(self) -> None:
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        scratch = self.path.with_suffix(".tmp")
        scratch.write_text(
            json.dumps(
                [record.to_dict() for record in self._owners.values()],
                indent=2,
            )
        )
        scratch.replace(self.path)
