"""Plaintext, ciphertext and key containers shared by every backend."""
from __future__ import annotations

import base64
import enum
import hashlib
import json
from dataclasses import dataclass
from dataclasses import field
from dataclasses import replace
from typing import Any
from typing import Dict
from typing import Optional

from maskdb.exceptions import KeyMismatchError
from maskdb.exceptions import OutOfRangeError
from maskdb.exceptions import UnsupportedParameterError

WIDTHS = (1, 8, 32)
"""Supported bit-widths. Width 1 holds encrypted booleans."""

SECURITY_PARAMS = (128, 192, 256)


class Op(str, enum.Enum):
    """Operation kinds tracked by backend statistics."""

    ENCRYPT = "encrypt"
    TRIVIAL_ENCRYPT = "trivial_encrypt"
    DECRYPT = "decrypt"
    EQ = "eq"
    LT = "lt"
    LE = "le"
    AND = "and"
    OR = "or"
    ADD = "add"
    MAX = "max"
    MIN = "min"
    CMUX = "cmux"


@dataclass(frozen=True, order=True)
class OpKey:
    """Statistics counter key.

    `trivial` is set when at least one operand was a trivial
    encryption, which is billed at the cheaper latency when the table
    distinguishes it.

    """

    op: str
    width: int
    trivial: bool = False

    def __str__(self) -> str:
        suffix = "/trivial" if self.trivial else ""
        return f"{self.op}/u{self.width}{suffix}"


def check_width(width: int) -> int:
    """Validate a bit-width tag.

    Args:
        width: candidate width.

    Returns:
        The width, unchanged.

    Raises:
        UnsupportedParameterError: width not in :data:`WIDTHS`.

    """
    if width not in WIDTHS:
        raise UnsupportedParameterError(
            f"Unsupported width {width}, expected one of {WIDTHS}"
        )
    return width


@dataclass(frozen=True)
class PlainScalar:
    """Unsigned integer tagged with its bit-width."""

    value: int
    width: int = 32

    def __post_init__(self) -> None:
        check_width(self.width)
        if isinstance(self.value, bool):
            object.__setattr__(self, "value", int(self.value))
        if not isinstance(self.value, int):
            raise OutOfRangeError(
                f"Plaintext must be an integer, got {type(self.value)}"
            )
        if not 0 <= self.value < 2**self.width:
            raise OutOfRangeError(
                f"Value does not fit in an unsigned {self.width}-bit integer"
            )

    def __int__(self) -> int:
        return self.value


@dataclass(frozen=True)
class Ciphertext:
    """Opaque encrypted scalar.

    Only the backend which produced it can interpret `payload`.

    """

    backend_id: int
    width: int
    trivial: bool
    payload: bytes = field(repr=False)

    def __repr__(self) -> str:
        return (
            f"Ciphertext(backend_id={self.backend_id}, width={self.width}, "
            f"trivial={self.trivial}, payload=<{len(self.payload)} bytes>)"
        )

    @property
    def is_bool(self) -> bool:  # noqa: D102
        return self.width == 1


CipherBool = Ciphertext
"""A :class:`Ciphertext` of width 1."""


def _b64(data: Optional[bytes]) -> Optional[str]:
    return None if data is None else base64.b64encode(data).decode("ascii")


def _unb64(data: Optional[str]) -> Optional[bytes]:
    return None if data is None else base64.b64decode(data)


@dataclass(frozen=True)
class KeyMaterial:
    """Homomorphic key set.

    The secret key is ``None`` for the public half handed to servers.

    """

    backend_id: int
    security_param: int
    public_key: bytes = field(repr=False)
    secret_key: Optional[bytes] = field(repr=False)
    evaluation_key: bytes = field(repr=False)

    @property
    def fingerprint(self) -> bytes:
        """Eight bytes identifying the key family.

        Returns:
            Truncated digest of the public and evaluation keys.

        """
        digest = hashlib.sha256(self.public_key + self.evaluation_key)
        return digest.digest()[:8]

    @property
    def key_id(self) -> str:  # noqa: D102
        return self.fingerprint.hex()

    @property
    def has_secret(self) -> bool:  # noqa: D102
        return self.secret_key is not None

    def public(self) -> KeyMaterial:
        """Drop the secret key.

        Returns:
            The key material a server may hold.

        """
        return replace(self, secret_key=None)

    def require_secret(self) -> bytes:
        """Get the secret key or fail.

        Returns:
            The secret key bytes.

        Raises:
            KeyMismatchError: this is a public-only key.

        """
        if self.secret_key is None:
            raise KeyMismatchError("Secret key required for this operation")
        return self.secret_key

    def to_dict(self) -> Dict[str, Any]:  # noqa: D102
        return {
            "backend_id": self.backend_id,
            "security_param": self.security_param,
            "public_key": _b64(self.public_key),
            "secret_key": _b64(self.secret_key),
            "evaluation_key": _b64(self.evaluation_key),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> KeyMaterial:  # noqa: D102
        return cls(
            backend_id=int(data["backend_id"]),
            security_param=int(data["security_param"]),
            public_key=_unb64(data["public_key"]) or b"",
            secret_key=_unb64(data.get("secret_key")),
            evaluation_key=_unb64(data["evaluation_key"]) or b"",
        )

    def to_json(self) -> str:  # noqa: D102
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, raw: str | bytes) -> KeyMaterial:  # noqa: D102
        return cls.from_dict(json.loads(raw))
