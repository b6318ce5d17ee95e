"""Signed delegation tokens.

A token grants a user a set of permissions over one owner's tables until
``expires_at``. Root tokens are signed by the owner; a delegated token
is signed by the holder of its parent and carries the parent along, so
verification walks the chain back to the owner key.

Signed bytes are the fields in declaration order, each prefixed with its
4-byte big-endian length; the parent, if any, is the last field in its
own wire form. The wire form is the signed bytes and the signature,
length-prefixed the same way, and base64 when embedded in JSON.

"""
from __future__ import annotations

import base64
import binascii
import enum
import hashlib
import logging
import os
import secrets
import struct
import threading
import time
from dataclasses import dataclass
from dataclasses import field
from pathlib import Path
from typing import Dict
from typing import FrozenSet
from typing import Iterable
from typing import List
from typing import Optional

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
)
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PublicKey,
)

from maskdb.exceptions import BadSignatureError
from maskdb.exceptions import EscalationError
from maskdb.exceptions import PermissionDeniedError
from maskdb.exceptions import ReplayedNonceError
from maskdb.exceptions import TokenExpiredError
from maskdb.exceptions import TokenFormatError

logger = logging.getLogger(__name__)

NONCE_SIZE = 16
KEY_SIZE = 32
SIGNATURE_SIZE = 64
PRIVATE_KEY_FILE = "owner.pem"
PUBLIC_KEY_FILE = "owner.pub"

_LENGTH = struct.Struct(">I")
_EXPIRY = struct.Struct(">Q")


class Permission(str, enum.Enum):
    """Rights a token can grant."""

    READ = "Read"
    WRITE = "Write"
    DELETE = "Delete"
    DELEGATE = "Delegate"

    @classmethod
    def parse(cls, names: Iterable[str]) -> FrozenSet[Permission]:
        """Read permission names, case-insensitively.

        Args:
            names: eg ``["read", "Delegate"]``.

        Returns:
            The permission set.

        Raises:
            ValueError: unknown name.

        """
        lookup = {member.value.lower(): member for member in cls}
        try:
            return frozenset(lookup[name.strip().lower()] for name in names)
        except KeyError as exc:
            raise ValueError(f"Unknown permission {exc.args[0]!r}") from exc


def owner_id_for(verification_key: bytes) -> str:
    """Self-certifying owner identifier.

    Args:
        verification_key: raw 32-byte public key.

    Returns:
        Hex of the first 16 bytes of its sha256.

    """
    return hashlib.sha256(verification_key).hexdigest()[:32]


@dataclass(frozen=True)
class OwnerKeypair:
    """Ed25519 signing key of a data owner (or of a token holder)."""

    signing_key: Ed25519PrivateKey = field(repr=False)

    @classmethod
    def generate(cls) -> OwnerKeypair:  # noqa: D102
        return cls(Ed25519PrivateKey.generate())

    @property
    def verification_key(self) -> bytes:
        """Raw public key bytes."""
        return self.signing_key.public_key().public_bytes(
            encoding=serialization.Encoding.Raw,
            format=serialization.PublicFormat.Raw,
        )

    @property
    def owner_id(self) -> str:  # noqa: D102
        return owner_id_for(self.verification_key)

    def sign(self, data: bytes) -> bytes:  # noqa: D102
        return self.signing_key.sign(data)

    def save(self, directory: Path, overwrite: bool = False) -> Path:
        """Write the key pair as PEM files.

        Args:
            directory: destination, created when missing.
            overwrite: replace existing files.

        Returns:
            Path of the private key file.

        Raises:
            FileExistsError: files exist and overwrite is off.

        """
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        private = directory / PRIVATE_KEY_FILE
        if private.exists() and not overwrite:
            raise FileExistsError(private)
        private.write_bytes(
            self.signing_key.private_bytes(
                encoding=serialization.Encoding.PEM,
                format=serialization.PrivateFormat.PKCS8,
                encryption_algorithm=serialization.NoEncryption(),
            )
        )
        os.chmod(private, 0o600)
        (directory / PUBLIC_KEY_FILE).write_text(
            base64.b64encode(self.verification_key).decode("ascii") + "\n"
        )
        return private

    @classmethod
    def load(cls, directory: Path) -> OwnerKeypair:
        """Read a key pair written by :meth:`save`.

        Args:
            directory: where the PEM file lives.

        Returns:
            The key pair.

        """
        key = serialization.load_pem_private_key(
            (Path(directory) / PRIVATE_KEY_FILE).read_bytes(), password=None
        )
        if not isinstance(key, Ed25519PrivateKey):
            raise TokenFormatError("Owner key is not an Ed25519 key")
        return cls(key)


def _pack(*fields: bytes) -> bytes:
    return b"".join(_LENGTH.pack(len(data)) + data for data in fields)


def _unpack(raw: bytes) -> List[bytes]:
    fields = []
    offset = 0
    while offset < len(raw):
        if offset + _LENGTH.size > len(raw):
            raise TokenFormatError("Truncated token field length")
        (length,) = _LENGTH.unpack_from(raw, offset)
        offset += _LENGTH.size
        if offset + length > len(raw):
            raise TokenFormatError("Truncated token field")
        fields.append(raw[offset : offset + length])
        offset += length
    return fields


def _encode_permissions(permissions: FrozenSet[Permission]) -> bytes:
    return ",".join(sorted(p.value for p in permissions)).encode()


def _decode_permissions(raw: bytes) -> FrozenSet[Permission]:
    names = raw.decode("ascii", errors="strict").split(",")
    if _encode_permissions(frozenset(map(Permission, names))) != raw:
        raise ValueError("Permissions are not canonical")
    return frozenset(map(Permission, names))


@dataclass(frozen=True)
class DelegationToken:
    """Capability granting ``permissions`` to ``user_id``."""

    owner_id: str
    user_id: str
    permissions: FrozenSet[Permission]
    expires_at: int
    nonce: bytes = field(repr=False)
    holder_key: bytes = field(default=b"", repr=False)
    parent: Optional[DelegationToken] = field(default=None, repr=False)
    signature: bytes = field(default=b"", repr=False)

    def signed_bytes(self) -> bytes:
        """Canonical encoding of every field but the signature."""
        return _pack(
            self.owner_id.encode(),
            self.user_id.encode(),
            _encode_permissions(self.permissions),
            _EXPIRY.pack(self.expires_at),
            self.nonce,
            self.holder_key,
            b"" if self.parent is None else self.parent.to_bytes(),
        )

    def to_bytes(self) -> bytes:  # noqa: D102
        return _pack(self.signed_bytes(), self.signature)

    def to_b64(self) -> str:  # noqa: D102
        return base64.b64encode(self.to_bytes()).decode("ascii")

    @classmethod
    def from_bytes(cls, raw: bytes) -> DelegationToken:
        """Parse the wire form.

        Args:
            raw: output of :meth:`to_bytes`.

        Returns:
            The token, unverified.

        Raises:
            TokenFormatError: malformed encoding.

        """
        outer = _unpack(raw)
        if len(outer) != 2:
            raise TokenFormatError("A token has a body and a signature")
        body, signature = outer
        fields = _unpack(body)
        if len(fields) != 7:
            raise TokenFormatError(
                f"Expected 7 token fields, got {len(fields)}"
            )
        owner, user, permissions, expiry, nonce, holder, parent = fields
        if len(nonce) != NONCE_SIZE or len(expiry) != _EXPIRY.size:
            raise TokenFormatError("Bad nonce or expiry size")
        if len(holder) not in (0, KEY_SIZE):
            raise TokenFormatError("Bad holder key size")
        if len(signature) != SIGNATURE_SIZE:
            raise TokenFormatError("Bad signature size")
        try:
            token = cls(
                owner_id=owner.decode("ascii"),
                user_id=user.decode("utf-8"),
                permissions=_decode_permissions(permissions),
                expires_at=_EXPIRY.unpack(expiry)[0],
                nonce=nonce,
                holder_key=holder,
                parent=cls.from_bytes(parent) if parent else None,
                signature=signature,
            )
        except (UnicodeDecodeError, ValueError) as exc:
            raise TokenFormatError(f"Bad token field: {exc}") from exc
        if token.to_bytes() != raw:
            raise TokenFormatError("Token encoding is not canonical")
        return token

    @classmethod
    def from_b64(cls, text: str) -> DelegationToken:  # noqa: D102
        try:
            raw = base64.b64decode(text.encode("ascii"), validate=True)
        except (binascii.Error, UnicodeEncodeError) as exc:
            raise TokenFormatError(f"Token is not base64: {exc}") from exc
        return cls.from_bytes(raw)

    def has_permission(self, permission: Permission) -> bool:  # noqa: D102
        return permission in self.permissions

    def chain(self) -> List[DelegationToken]:
        """Tokens from the owner-signed root down to this one."""
        tokens = []
        node: Optional[DelegationToken] = self
        while node is not None:
            tokens.append(node)
            node = node.parent
        return tokens[::-1]

    @property
    def depth(self) -> int:  # noqa: D102
        return len(self.chain()) - 1


def _fresh_nonce() -> bytes:
    return secrets.token_bytes(NONCE_SIZE)


def _check_grant(permissions: FrozenSet[Permission], expires_at: int) -> None:
    if not permissions:
        raise ValueError("A token needs at least one permission")
    if expires_at <= time.time():
        raise ValueError("expires_at must be in the future")


def create_token(
    keypair: OwnerKeypair,
    user_id: str,
    permissions: Iterable[Permission],
    expires_at: int,
    holder_key: bytes = b"",
) -> DelegationToken:
    """Issue a root token signed by the owner.

    Args:
        keypair: the owner's signing key.
        user_id: who the token is for.
        permissions: non-empty subset of :class:`Permission`.
        expires_at: expiry, in seconds since the epoch.
        holder_key: verification key of the user, needed to delegate.

    Returns:
        The signed token.

    Raises:
        ValueError: empty permission set or expiry in the past.

    """
    granted = frozenset(permissions)
    _check_grant(granted, expires_at)
    unsigned = DelegationToken(
        owner_id=keypair.owner_id,
        user_id=user_id,
        permissions=granted,
        expires_at=int(expires_at),
        nonce=_fresh_nonce(),
        holder_key=holder_key,
    )
    return _signed(unsigned, keypair)


def _signed(token: DelegationToken, keypair: OwnerKeypair) -> DelegationToken:
    return DelegationToken(
        owner_id=token.owner_id,
        user_id=token.user_id,
        permissions=token.permissions,
        expires_at=token.expires_at,
        nonce=token.nonce,
        holder_key=token.holder_key,
        parent=token.parent,
        signature=keypair.sign(token.signed_bytes()),
    )


def delegate(
    parent: DelegationToken,
    keypair: OwnerKeypair,
    user_id: str,
    permissions: Iterable[Permission],
    expires_at: Optional[int] = None,
    holder_key: bytes = b"",
) -> DelegationToken:
    """Issue an attenuated child of a token.

    Args:
        parent: a token granting Delegate.
        keypair: the parent holder's key; must match ``parent.holder_key``.
        user_id: who the child is for.
        permissions: subset of the parent's permissions.
        expires_at: child expiry; defaults to the parent's.
        holder_key: verification key of the child's holder.

    Returns:
        The signed child token.

    Raises:
        PermissionDeniedError: the parent does not grant Delegate.
        BadSignatureError: the key is not the parent's holder key.
        EscalationError: wider permissions or later expiry than the
            parent.

    """
    if not parent.has_permission(Permission.DELEGATE):
        raise PermissionDeniedError("Parent token does not grant Delegate")
    if keypair.verification_key != parent.holder_key:
        raise BadSignatureError("Signer does not hold the parent token")
    granted = frozenset(permissions)
    expires_at = parent.expires_at if expires_at is None else int(expires_at)
    if not granted <= parent.permissions:
        extra = sorted(p.value for p in granted - parent.permissions)
        raise EscalationError(f"Parent token does not grant {extra}")
    if expires_at > parent.expires_at:
        raise EscalationError("Child token outlives its parent")
    _check_grant(granted, expires_at)
    unsigned = DelegationToken(
        owner_id=parent.owner_id,
        user_id=user_id,
        permissions=granted,
        expires_at=expires_at,
        nonce=_fresh_nonce(),
        holder_key=holder_key,
        parent=parent,
    )
    return _signed(unsigned, keypair)


class NonceCache:
    """Seen nonces, each kept until its token expires."""

    def __init__(self) -> None:  # noqa: D107
        self._seen: Dict[bytes, int] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        with self._lock:
            return len(self._seen)

    def check_and_insert(
        self, nonce: bytes, expires_at: int, now: float
    ) -> None:
        """Record a nonce, failing when it was already seen.

        Args:
            nonce: token nonce.
            expires_at: when the entry may be forgotten.
            now: current time.

        Raises:
            ReplayedNonceError: the nonce is still remembered.

        """
        with self._lock:
            expired = [
                seen for seen, until in self._seen.items() if until <= now
            ]
            for seen in expired:
                del self._seen[seen]
            if nonce in self._seen:
                raise ReplayedNonceError("Token nonce was already used")
            self._seen[nonce] = expires_at


def _verify_signature(
    key: bytes, token: DelegationToken, what: str
) -> None:
    try:
        Ed25519PublicKey.from_public_bytes(key).verify(
            token.signature, token.signed_bytes()
        )
    except (InvalidSignature, ValueError) as exc:
        raise BadSignatureError(f"Invalid signature on {what}") from exc


def verify_token(
    token: DelegationToken,
    verification_key: bytes,
    now: Optional[float] = None,
    nonce_cache: Optional[NonceCache] = None,
) -> FrozenSet[Permission]:
    """Check a token and consume its nonce.

    Signatures are checked first, then expiry, then the nonce.

    Args:
        token: the token, root or delegated.
        verification_key: the owner's raw public key.
        now: current time; defaults to :func:`time.time`.
        nonce_cache: replay memory; ``None`` skips the replay check.

    Returns:
        The permissions the token grants.

    Raises:
        BadSignatureError: a signature along the chain does not verify.
        EscalationError: a link widens its parent.
        TokenExpiredError: the token expired.
        ReplayedNonceError: the nonce was already used.

    """
    now = time.time() if now is None else now
    if owner_id_for(verification_key) != token.owner_id:
        raise BadSignatureError("Token names another owner")
    chain = token.chain()
    signer = verification_key
    for depth, link in enumerate(chain):
        if not link.permissions:
            raise EscalationError("Token grants no permission")
        _verify_signature(signer, link, f"link {depth}")
        if depth:
            parent = chain[depth - 1]
            if (
                link.owner_id != parent.owner_id
                or not link.permissions <= parent.permissions
                or link.expires_at > parent.expires_at
                or Permission.DELEGATE not in parent.permissions
            ):
                raise EscalationError(f"Link {depth} widens its parent")
        if not link.holder_key and depth < len(chain) - 1:
            raise BadSignatureError(f"Link {depth} has no holder key")
        signer = link.holder_key
    if now >= min(link.expires_at for link in chain):
        raise TokenExpiredError(f"Token expired at {token.expires_at}")
    if nonce_cache is not None:
        nonce_cache.check_and_insert(token.nonce, token.expires_at, now)
    return token.permissions


def require(
    permissions: FrozenSet[Permission], needed: Permission
) -> None:
    """Fail unless a verified permission set includes ``needed``.

    Args:
        permissions: output of :func:`verify_token`.
        needed: the right the request exercises.

    Raises:
        PermissionDeniedError: missing right.

    """
    if needed not in permissions:
        raise PermissionDeniedError(f"Token does not grant {needed.value}")

