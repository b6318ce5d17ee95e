"""OpenFHE BinFHE adapter.

Integers are vectors of encrypted bits, least significant first, and
every operator is a boolean circuit evaluated with bootstrapped gates.
Bits known at evaluation time (trivial encryptions and whatever folds
from them) stay as plain ``0``/``1`` and are constant-folded out of the
circuits, so a trivial ciphertext is a genuinely noiseless operand.

LWE ciphertexts and keys live in a process-local registry and payloads
carry handles into it; ciphertexts produced here are only meaningful to
the process that created them.

Requires the ``fhe`` extra (``openfhe``).

"""
from __future__ import annotations

import logging
import secrets
import threading
from typing import Any
from typing import Dict
from typing import List
from typing import Optional
from typing import Union

from openfhe import BINFHE_PARAMSET
from openfhe import BinFHEContext
from openfhe import BINGATE

from maskdb.crypto.base import Backend as Base
from maskdb.crypto.latency import LatencyTable
from maskdb.crypto.types import CipherBool
from maskdb.crypto.types import Ciphertext
from maskdb.crypto.types import KeyMaterial
from maskdb.exceptions import CorruptCiphertextError
from maskdb.exceptions import KeyMismatchError

logger = logging.getLogger(__name__)

HANDLE_BYTES = 16
FINGERPRINT_BYTES = 8
_CONST_0, _CONST_1, _HANDLE = 0, 1, 2

PARAMSETS = {
    128: BINFHE_PARAMSET.STD128,
    192: BINFHE_PARAMSET.STD192,
    256: BINFHE_PARAMSET.STD256,
}

Bit = Union[int, Any]
"""Either a folded constant (0 or 1) or an LWE ciphertext."""


class _Registry:
    """Handle table for native objects."""

    def __init__(self) -> None:
        self._objects: Dict[bytes, Any] = {}
        self._lock = threading.Lock()

    def put(self, obj: Any) -> bytes:
        handle = secrets.token_bytes(HANDLE_BYTES)
        with self._lock:
            self._objects[handle] = obj
        return handle

    def get(self, handle: bytes) -> Any:
        with self._lock:
            try:
                return self._objects[handle]
            except KeyError:
                raise CorruptCiphertextError(
                    "Unknown native handle; ciphertext from another process?"
                ) from None

    def __len__(self) -> int:
        return len(self._objects)


REGISTRY = _Registry()


class _Gates:
    """Constant-folding gate evaluator over one BinFHE context."""

    def __init__(self, context: BinFHEContext) -> None:
        self.context = context

    def not_(self, x: Bit) -> Bit:
        if isinstance(x, int):
            return 1 - x
        return self.context.EvalNOT(x)

    def and_(self, x: Bit, y: Bit) -> Bit:
        if isinstance(x, int):
            return y if x else 0
        if isinstance(y, int):
            return x if y else 0
        return self.context.EvalBinGate(BINGATE.AND, x, y)

    def or_(self, x: Bit, y: Bit) -> Bit:
        if isinstance(x, int):
            return 1 if x else y
        if isinstance(y, int):
            return 1 if y else x
        return self.context.EvalBinGate(BINGATE.OR, x, y)

    def xor(self, x: Bit, y: Bit) -> Bit:
        if isinstance(x, int):
            return self.not_(y) if x else y
        if isinstance(y, int):
            return self.not_(x) if y else x
        return self.context.EvalBinGate(BINGATE.XOR, x, y)

    def xnor(self, x: Bit, y: Bit) -> Bit:
        if isinstance(x, int) or isinstance(y, int):
            return self.not_(self.xor(x, y))
        return self.context.EvalBinGate(BINGATE.XNOR, x, y)

    def mux(self, sel: Bit, x: Bit, y: Bit) -> Bit:
        if isinstance(sel, int):
            return x if sel else y
        return self.or_(self.and_(sel, x), self.and_(self.not_(sel), y))

    # word circuits

    def equal(self, a: List[Bit], b: List[Bit]) -> Bit:
        result: Bit = 1
        for x, y in zip(a, b):
            result = self.and_(result, self.xnor(x, y))
        return result

    def less(self, a: List[Bit], b: List[Bit]) -> Bit:
        result: Bit = 0
        for x, y in zip(a, b):
            result = self.mux(self.xor(x, y), y, result)
        return result

    def add(self, a: List[Bit], b: List[Bit]) -> List[Bit]:
        carry: Bit = 0
        out = []
        for x, y in zip(a, b):
            half = self.xor(x, y)
            out.append(self.xor(half, carry))
            carry = self.or_(self.and_(x, y), self.and_(carry, half))
        return out

    def select(self, sel: Bit, a: List[Bit], b: List[Bit]) -> List[Bit]:
        return [self.mux(sel, x, y) for x, y in zip(a, b)]


class Backend(Base):
    """Gate-level backend on OpenFHE's BinFHE (FHEW/TFHE-style)."""

    backend_id = 2
    name = "fhe"

    def __init__(
        self,
        latency_table: Optional[LatencyTable] = None,
        seed: Optional[int] = None,
    ) -> None:
        """Create an adapter with no registered keys.

        Args:
            latency_table: forwarded to :class:`maskdb.crypto.base.Backend`.
            seed: ignored, OpenFHE draws its own randomness.

        """
        super().__init__(latency_table=latency_table, seed=seed)
        if seed is not None:
            logger.warning("OpenFHE backend ignores seed=%s", seed)
        self._gates: Dict[bytes, _Gates] = {}
        self._gate_lock = threading.Lock()

    def _keygen(self, security_param: int) -> KeyMaterial:
        context = BinFHEContext()
        context.GenerateBinFHEContext(PARAMSETS[security_param])
        secret = context.KeyGen()
        context.BTKeyGen(secret)
        return KeyMaterial(
            backend_id=self.backend_id,
            security_param=security_param,
            public_key=secrets.token_bytes(HANDLE_BYTES),
            secret_key=REGISTRY.put(secret),
            evaluation_key=REGISTRY.put(context),
        )

    def _register(self, key: KeyMaterial) -> None:
        context = REGISTRY.get(key.evaluation_key)
        self._gates[key.fingerprint] = _Gates(context)

    def _gates_for(self, fingerprint: bytes) -> _Gates:
        try:
            return self._gates[fingerprint]
        except KeyError:
            raise KeyMismatchError(
                f"No evaluation key registered for {fingerprint.hex()}"
            ) from None

    # payloads

    @staticmethod
    def _pack(
        fingerprint: bytes, bits: List[Bit], width: int
    ) -> Ciphertext:
        parts = [fingerprint]
        for bit in bits:
            if isinstance(bit, int):
                parts.append(bytes((_CONST_1 if bit else _CONST_0,)))
            else:
                parts.append(bytes((_HANDLE,)) + REGISTRY.put(bit))
        trivial = all(isinstance(bit, int) for bit in bits)
        return Ciphertext(Backend.backend_id, width, trivial, b"".join(parts))

    @staticmethod
    def _unpack(ct: Ciphertext) -> tuple:
        payload = ct.payload
        fingerprint = payload[:FINGERPRINT_BYTES]
        bits: List[Bit] = []
        pos = FINGERPRINT_BYTES
        while pos < len(payload):
            tag = payload[pos]
            pos += 1
            if tag in (_CONST_0, _CONST_1):
                bits.append(tag)
            elif tag == _HANDLE:
                bits.append(REGISTRY.get(payload[pos : pos + HANDLE_BYTES]))
                pos += HANDLE_BYTES
            else:
                raise CorruptCiphertextError(f"Bad bit tag {tag}")
        if len(fingerprint) != FINGERPRINT_BYTES or len(bits) != ct.width:
            raise CorruptCiphertextError("Bit count does not match width")
        return fingerprint, bits

    # encryption

    def _encrypt(self, key: KeyMaterial, value: int, width: int) -> Ciphertext:
        context = REGISTRY.get(key.evaluation_key)
        secret = REGISTRY.get(key.require_secret())
        bits = [
            context.Encrypt(secret, (value >> i) & 1) for i in range(width)
        ]
        return self._pack(key.fingerprint, bits, width)

    def _trivial_encrypt(self, value: int, width: int) -> Ciphertext:
        bits = [(value >> i) & 1 for i in range(width)]
        return self._pack(bytes(FINGERPRINT_BYTES), bits, width)

    def _decrypt(self, key: KeyMaterial, c: Ciphertext) -> int:
        fingerprint, bits = self._unpack(c)
        if not c.trivial and fingerprint != key.fingerprint:
            raise KeyMismatchError(
                "Ciphertext was encrypted under another key"
            )
        context = REGISTRY.get(key.evaluation_key)
        secret = REGISTRY.get(key.require_secret())
        value = 0
        for i, bit in enumerate(bits):
            if not isinstance(bit, int):
                bit = int(context.Decrypt(secret, bit))
            value |= (bit & 1) << i
        return value

    # evaluation

    def _operands(self, *cts: Ciphertext):
        fingerprints = set()
        words = []
        for ct in cts:
            fingerprint, bits = self._unpack(ct)
            if not ct.trivial:
                fingerprints.add(fingerprint)
            words.append(bits)
        if len(fingerprints) > 1:
            raise KeyMismatchError("Operands encrypted under different keys")
        if not fingerprints:
            return bytes(FINGERPRINT_BYTES), _Gates(None), words
        fingerprint = fingerprints.pop()
        return fingerprint, self._gates_for(fingerprint), words

    def _bool(self, fingerprint: bytes, bit: Bit) -> CipherBool:
        if isinstance(bit, int):
            fingerprint = bytes(FINGERPRINT_BYTES)
        return self._pack(fingerprint, [bit], 1)

    def _eq(self, a: Ciphertext, b: Ciphertext) -> CipherBool:
        fingerprint, gates, (x, y) = self._operands(a, b)
        with self._gate_lock:
            return self._bool(fingerprint, gates.equal(x, y))

    def _lt(self, a: Ciphertext, b: Ciphertext) -> CipherBool:
        fingerprint, gates, (x, y) = self._operands(a, b)
        with self._gate_lock:
            return self._bool(fingerprint, gates.less(x, y))

    def _le(self, a: Ciphertext, b: Ciphertext) -> CipherBool:
        fingerprint, gates, (x, y) = self._operands(a, b)
        with self._gate_lock:
            return self._bool(fingerprint, gates.not_(gates.less(y, x)))

    def _extreme(self, a: Ciphertext, b: Ciphertext, *, largest: bool):
        fingerprint, gates, (x, y) = self._operands(a, b)
        with self._gate_lock:
            a_less = gates.less(x, y)
            if largest:
                bits = gates.select(a_less, y, x)
            else:
                bits = gates.select(a_less, x, y)
        return self._word(fingerprint, bits, a.width)

    def _word(self, fingerprint: bytes, bits: List[Bit], width: int):
        if all(isinstance(bit, int) for bit in bits):
            fingerprint = bytes(FINGERPRINT_BYTES)
        return self._pack(fingerprint, bits, width)

    def _max(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        return self._extreme(a, b, largest=True)

    def _min(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        return self._extreme(a, b, largest=False)

    def _and(self, a: CipherBool, b: CipherBool) -> CipherBool:
        fingerprint, gates, ((x,), (y,)) = self._operands(a, b)
        with self._gate_lock:
            return self._bool(fingerprint, gates.and_(x, y))

    def _or(self, a: CipherBool, b: CipherBool) -> CipherBool:
        fingerprint, gates, ((x,), (y,)) = self._operands(a, b)
        with self._gate_lock:
            return self._bool(fingerprint, gates.or_(x, y))

    def _add(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        fingerprint, gates, (x, y) = self._operands(a, b)
        with self._gate_lock:
            bits = gates.add(x, y)
        return self._word(fingerprint, bits, a.width)

    def _cmux(
        self, cond: CipherBool, then_ct: Ciphertext, else_ct: Ciphertext
    ) -> Ciphertext:
        fingerprint, gates, ((sel,), x, y) = self._operands(
            cond, then_ct, else_ct
        )
        with self._gate_lock:
            bits = gates.select(sel, x, y)
        return self._word(fingerprint, bits, then_ct.width)
