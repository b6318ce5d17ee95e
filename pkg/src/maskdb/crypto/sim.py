"""Instrumented cleartext-simulation backend.

Plaintexts travel masked with an HMAC-SHA256 keystream and carry an
authentication tag, so payload bytes never hold the raw integer and
tampering is detected. Operators unmask with the registered evaluation
key, compute in the clear and re-mask under a fresh nonce.

This is *not* encryption in the cryptographic sense: whoever holds the
evaluation key can read every value. It exists to exercise and count
the homomorphic protocol at desk scale.

Payload layout::

    fingerprint:8 | nonce:12 | masked value:4 | tag:8 | padding

Trivial ciphertexts use an all-zero fingerprint, a zero nonce and a
public mask key.

"""
from __future__ import annotations

import hashlib
import hmac
import logging
import secrets
import struct
import threading
from typing import Callable
from typing import Dict
from typing import Optional

import numpy as np

from maskdb.crypto.base import Backend as Base
from maskdb.crypto.latency import LatencyTable
from maskdb.crypto.types import CipherBool
from maskdb.crypto.types import Ciphertext
from maskdb.crypto.types import KeyMaterial
from maskdb.exceptions import CorruptCiphertextError
from maskdb.exceptions import KeyMismatchError

logger = logging.getLogger(__name__)

FINGERPRINT_BYTES = 8
NONCE_BYTES = 12
TAG_BYTES = 8
_VALUE = struct.Struct(">I")
BODY_BYTES = FINGERPRINT_BYTES + NONCE_BYTES + _VALUE.size
PAYLOAD_BYTES = BODY_BYTES + TAG_BYTES

TRIVIAL_FINGERPRINT = bytes(FINGERPRINT_BYTES)
_TRIVIAL_NONCE = bytes(NONCE_BYTES)
_TRIVIAL_KEY = hashlib.sha256(b"maskdb/sim/trivial").digest()


def _derive(secret: bytes, label: bytes, security_param: int) -> bytes:
    info = label + security_param.to_bytes(2, "big")
    return hmac.new(secret, info, hashlib.sha256).digest()


def _keystream(mask_key: bytes, nonce: bytes) -> bytes:
    return hmac.new(mask_key, b"mask" + nonce, hashlib.sha256).digest()[:4]


def _xor(left: bytes, right: bytes) -> bytes:
    return bytes(x ^ y for x, y in zip(left, right))


def _tag(mask_key: bytes, body: bytes, width: int, trivial: bool) -> bytes:
    message = body + bytes((width, int(trivial)))
    return hmac.new(mask_key, message, hashlib.sha256).digest()[:TAG_BYTES]


class Backend(Base):
    """Cleartext backend with masked payloads and exact op accounting."""

    backend_id = 1
    name = "sim"

    def __init__(
        self,
        latency_table: Optional[LatencyTable] = None,
        seed: Optional[int] = None,
        padding: int = 0,
    ) -> None:
        """Set up randomness and the key registry.

        Args:
            latency_table: forwarded to :class:`maskdb.crypto.base.Backend`.
            seed: when set, keys and nonces come from a seeded
                :func:`numpy.random.default_rng`.
            padding: random bytes appended to every payload, to mimic
                real ciphertext sizes.

        """
        super().__init__(latency_table=latency_table, seed=seed)
        self.padding = padding
        self._rng = np.random.default_rng(seed) if seed is not None else None
        self._rng_lock = threading.Lock()
        self._mask_keys: Dict[bytes, bytes] = {}

    def _random(self, size: int) -> bytes:
        if not size:
            return b""
        if self._rng is None:
            return secrets.token_bytes(size)
        with self._rng_lock:
            return self._rng.bytes(size)

    # keys

    def _keygen(self, security_param: int) -> KeyMaterial:
        secret = self._random(32)
        return KeyMaterial(
            backend_id=self.backend_id,
            security_param=security_param,
            public_key=_derive(secret, b"public", security_param),
            secret_key=secret,
            evaluation_key=_derive(secret, b"evaluation", security_param),
        )

    def _register(self, key: KeyMaterial) -> None:
        self._mask_keys[key.fingerprint] = key.evaluation_key

    def _registered_key(self, fingerprint: bytes) -> bytes:
        if fingerprint == TRIVIAL_FINGERPRINT:
            return _TRIVIAL_KEY
        try:
            return self._mask_keys[fingerprint]
        except KeyError:
            raise KeyMismatchError(
                f"No evaluation key registered for {fingerprint.hex()}"
            ) from None

    # payloads

    def _seal(
        self, fingerprint: bytes, mask_key: bytes, value: int, width: int
    ) -> Ciphertext:
        trivial = fingerprint == TRIVIAL_FINGERPRINT
        nonce = _TRIVIAL_NONCE if trivial else self._random(NONCE_BYTES)
        masked = _xor(_VALUE.pack(value), _keystream(mask_key, nonce))
        body = fingerprint + nonce + masked
        payload = (
            body
            + _tag(mask_key, body, width, trivial)
            + self._random(self.padding)
        )
        return Ciphertext(self.backend_id, width, trivial, payload)

    @staticmethod
    def _fingerprint_of(ct: Ciphertext) -> bytes:
        if len(ct.payload) < PAYLOAD_BYTES:
            raise CorruptCiphertextError("Ciphertext payload too short")
        fingerprint = ct.payload[:FINGERPRINT_BYTES]
        if ct.trivial != (fingerprint == TRIVIAL_FINGERPRINT):
            raise CorruptCiphertextError("Trivial flag does not match payload")
        return fingerprint

    @staticmethod
    def _open(ct: Ciphertext, mask_key: bytes) -> int:
        body = ct.payload[:BODY_BYTES]
        tag = ct.payload[BODY_BYTES:PAYLOAD_BYTES]
        expected = _tag(mask_key, body, ct.width, ct.trivial)
        if not hmac.compare_digest(tag, expected):
            raise CorruptCiphertextError("Ciphertext authentication failed")
        nonce = body[FINGERPRINT_BYTES : FINGERPRINT_BYTES + NONCE_BYTES]
        masked = body[FINGERPRINT_BYTES + NONCE_BYTES :]
        (value,) = _VALUE.unpack(_xor(masked, _keystream(mask_key, nonce)))
        if value >= 2**ct.width:
            raise CorruptCiphertextError("Decrypted value exceeds its width")
        return value

    def _unmask(self, ct: Ciphertext) -> int:
        return self._open(ct, self._registered_key(self._fingerprint_of(ct)))

    # encryption

    def _encrypt(self, key: KeyMaterial, value: int, width: int) -> Ciphertext:
        return self._seal(key.fingerprint, key.evaluation_key, value, width)

    def _trivial_encrypt(self, value: int, width: int) -> Ciphertext:
        return self._seal(TRIVIAL_FINGERPRINT, _TRIVIAL_KEY, value, width)

    def _decrypt(self, key: KeyMaterial, c: Ciphertext) -> int:
        secret = key.require_secret()
        evaluation = _derive(secret, b"evaluation", key.security_param)
        if not hmac.compare_digest(evaluation, key.evaluation_key):
            raise KeyMismatchError("Secret key does not match key material")
        fingerprint = self._fingerprint_of(c)
        if c.trivial:
            return self._open(c, _TRIVIAL_KEY)
        if fingerprint != key.fingerprint:
            raise KeyMismatchError(
                "Ciphertext was encrypted under another key"
            )
        return self._open(c, key.evaluation_key)

    # evaluation

    def _lift(
        self, func: Callable[..., int], width: int, *cts: Ciphertext
    ) -> Ciphertext:
        fingerprints = {
            self._fingerprint_of(ct) for ct in cts if not ct.trivial
        }
        if len(fingerprints) > 1:
            raise KeyMismatchError("Operands encrypted under different keys")
        values = [self._unmask(ct) for ct in cts]
        result = func(*values) % 2**width
        fingerprint = fingerprints.pop() if fingerprints else None
        if fingerprint is None:
            return self._trivial_encrypt(result, width)
        return self._seal(
            fingerprint, self._registered_key(fingerprint), result, width
        )

    def _eq(self, a: Ciphertext, b: Ciphertext) -> CipherBool:
        return self._lift(lambda x, y: int(x == y), 1, a, b)

    def _lt(self, a: Ciphertext, b: Ciphertext) -> CipherBool:
        return self._lift(lambda x, y: int(x < y), 1, a, b)

    def _le(self, a: Ciphertext, b: Ciphertext) -> CipherBool:
        return self._lift(lambda x, y: int(x <= y), 1, a, b)

    def _max(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        return self._lift(max, a.width, a, b)

    def _min(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        return self._lift(min, a.width, a, b)

    def _and(self, a: CipherBool, b: CipherBool) -> CipherBool:
        return self._lift(lambda x, y: x & y, 1, a, b)

    def _or(self, a: CipherBool, b: CipherBool) -> CipherBool:
        return self._lift(lambda x, y: x | y, 1, a, b)

    def _add(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        return self._lift(lambda x, y: x + y, a.width, a, b)

    def _cmux(
        self, cond: CipherBool, then_ct: Ciphertext, else_ct: Ciphertext
    ) -> Ciphertext:
        return self._lift(
            lambda c, x, y: x if c else y,
            then_ct.width,
            cond,
            then_ct,
            else_ct,
        )
