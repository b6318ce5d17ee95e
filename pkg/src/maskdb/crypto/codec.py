"""FHEC ciphertext serialization.

Layout (big-endian)::

    "FHEC" | version:u8 | backend_id:u8 | width:u8 | trivial:u8 |
    length:u32 | payload

"""
from __future__ import annotations

import base64
import binascii
import struct

from maskdb.crypto.types import Ciphertext
from maskdb.crypto.types import WIDTHS
from maskdb.exceptions import CorruptCiphertextError

MAGIC = b"FHEC"
VERSION = 1
_HEADER = struct.Struct(">4sBBBBI")
HEADER_SIZE = _HEADER.size


def encode(ct: Ciphertext) -> bytes:
    """Serialize a ciphertext.

    Args:
        ct: ciphertext to encode.

    Returns:
        FHEC bytes.

    """
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        ct.backend_id,
        ct.width,
        int(ct.trivial),
        len(ct.payload),
    )
    return header + ct.payload


def decode(raw: bytes) -> Ciphertext:
    """Parse FHEC bytes.

    Args:
        raw: exactly one encoded ciphertext.

    Returns:
        The ciphertext.

    Raises:
        CorruptCiphertextError: bad magic, version, flags or length.

    """
    if len(raw) < HEADER_SIZE:
        raise CorruptCiphertextError("Truncated FHEC header")
    magic, version, backend_id, width, trivial, length = _HEADER.unpack_from(
        raw
    )
    if magic != MAGIC:
        raise CorruptCiphertextError("Bad FHEC magic")
    if version != VERSION:
        raise CorruptCiphertextError(f"Unsupported FHEC version {version}")
    if width not in WIDTHS or trivial not in (0, 1):
        raise CorruptCiphertextError("Bad FHEC width or trivial flag")
    if len(raw) != HEADER_SIZE + length:
        raise CorruptCiphertextError(
            f"FHEC length mismatch: header says {length},"
            f" got {len(raw) - HEADER_SIZE}"
        )
    return Ciphertext(
        backend_id=backend_id,
        width=width,
        trivial=bool(trivial),
        payload=bytes(raw[HEADER_SIZE:]),
    )


def to_b64(ct: Ciphertext) -> str:  # noqa: D103
    return base64.b64encode(encode(ct)).decode("ascii")


def from_b64(text: str) -> Ciphertext:
    """Parse base64-wrapped FHEC bytes.

    Args:
        text: base64 text.

    Returns:
        The ciphertext.

    Raises:
        CorruptCiphertextError: not valid base64.

    """
    try:
        raw = base64.b64decode(text, validate=True)
    except (binascii.Error, ValueError, TypeError) as exc:
        raise CorruptCiphertextError("Ciphertext is not valid base64") from exc
    return decode(raw)
