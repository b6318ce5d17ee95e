"""Homomorphic backend interface and common definitions."""
from __future__ import annotations

import abc
import importlib
import logging
import threading
from collections import Counter
from dataclasses import dataclass
from dataclasses import field
from typing import Dict
from typing import Mapping
from typing import Optional
from typing import Tuple
from typing import Type
from typing import Union

from maskdb.crypto.latency import LatencyTable
from maskdb.crypto.types import CipherBool
from maskdb.crypto.types import Ciphertext
from maskdb.crypto.types import KeyMaterial
from maskdb.crypto.types import Op
from maskdb.crypto.types import OpKey
from maskdb.crypto.types import PlainScalar
from maskdb.crypto.types import SECURITY_PARAMS
from maskdb.exceptions import BackendUnavailableError
from maskdb.exceptions import KeyMismatchError
from maskdb.exceptions import UnsupportedParameterError
from maskdb.exceptions import WidthMismatchError

logger = logging.getLogger(__name__)

Plain = Union[PlainScalar, int]


@dataclass(frozen=True)
class BackendStats:
    """Snapshot of operation counters."""

    counters: Mapping[OpKey, int]
    table: LatencyTable = field(compare=False, repr=False)

    def count(
        self,
        op: Union[Op, str],
        width: Optional[int] = None,
        trivial: Optional[bool] = None,
    ) -> int:
        """Sum counters matching a filter.

        Args:
            op: operation kind.
            width: restrict to one width.
            trivial: restrict to trivial (or non-trivial) operands.

        Returns:
            The matching total.

        """
        op = Op(op).value
        return sum(
            count
            for key, count in self.counters.items()
            if key.op == op
            and (width is None or key.width == width)
            and (trivial is None or key.trivial == trivial)
        )

    @property
    def simulated_latency_ms(self) -> float:
        """Counters billed against the latency table.

        Returns:
            Simulated time in milliseconds.

        """
        return self.table.cost(self.counters)

    @property
    def total(self) -> int:  # noqa: D102
        return sum(self.counters.values())

    def as_dict(self) -> Dict[str, int]:
        """Flatten counters for display or the wire.

        Returns:
            ``"op/uW[/trivial]" -> count``, sorted.

        """
        return {
            str(key): count for key, count in sorted(self.counters.items())
        }

    @classmethod
    def from_dict(
        cls, raw: Mapping[str, int], table: Optional[LatencyTable] = None
    ) -> BackendStats:
        """Inverse of :meth:`as_dict`.

        Args:
            raw: flattened counters.
            table: latency table, defaults to the packaged one.

        Returns:
            The snapshot.

        """
        counters = {}
        for name, count in raw.items():
            op, width, *rest = name.split("/")
            key = OpKey(op, int(width.lstrip("u")), bool(rest))
            counters[key] = int(count)
        return cls(counters, table or LatencyTable.default())


class Backend(abc.ABC):
    """Homomorphic evaluation backend.

    This class has three purposes:
        * Interface for custom backends.
        * Skeleton for their internal workings: public operators check
          widths and update counters, then call the ``_`` hooks.
        * Factory to choose implementation.

    Evaluation is safe from many threads. Key generation and stats
    reset hold an exclusive lock.

    """

    backend_id: int = 0
    name: str = ""
    supported_security: Tuple[int, ...] = SECURITY_PARAMS

    def __init__(
        self,
        latency_table: Optional[LatencyTable] = None,
        seed: Optional[int] = None,
    ) -> None:
        """Initialize counters.

        Args:
            latency_table: medians billed by
                :attr:`BackendStats.simulated_latency_ms`.
            seed: makes key generation and encryption randomness
                deterministic, when the backend supports it.

        """
        self.latency_table = latency_table or LatencyTable.default()
        self.seed = seed
        self._counters: Counter[OpKey] = Counter()
        self._stats_lock = threading.Lock()
        self._exclusive = threading.RLock()

    @classmethod
    def from_name(cls: Type[Backend], name: str, **kwargs) -> Backend:
        """Factory to select a Backend by name.

        Args:
            name: backend module under :mod:`maskdb.crypto`, eg ``sim``.
            kwargs: forwarded to the backend constructor.

        Returns:
            The instantiated backend.

        Raises:
            BackendUnavailableError: unknown name, or its dependencies
                are missing.

        """
        if name in ("base", "types", "latency", "codec"):
            raise BackendUnavailableError(f"'{name}' is not a backend")
        try:
            module = importlib.import_module(f"{__package__}.{name}")
        except ImportError as exc:
            raise BackendUnavailableError(
                f"Backend '{name}' is unavailable: {exc}"
            ) from exc
        klass = getattr(module, "Backend", None)
        if klass is None:
            raise BackendUnavailableError(f"'{name}' is not a backend")
        return klass(**kwargs)

    # stats

    def _count(self, op: Op, width: int, *operands: Ciphertext) -> None:
        key = OpKey(op.value, width, any(ct.trivial for ct in operands))
        with self._stats_lock:
            self._counters[key] += 1

    def stats(self) -> BackendStats:
        """Snapshot the counters.

        Returns:
            Current counts and the latency table they are billed with.

        """
        with self._stats_lock:
            counters = {k: v for k, v in self._counters.items() if v}
        return BackendStats(counters, self.latency_table)

    def reset_stats(self) -> None:
        """Zero every counter."""
        with self._exclusive, self._stats_lock:
            self._counters.clear()

    # key management

    def keygen(self, security_param: int = 128) -> KeyMaterial:
        """Generate a fresh key set and register it for evaluation.

        Args:
            security_param: security level in bits.

        Returns:
            The full key material, including the secret key.

        Raises:
            UnsupportedParameterError: level not supported.

        """
        if security_param not in self.supported_security:
            raise UnsupportedParameterError(
                f"Security parameter {security_param} not supported by"
                f" '{self.name}', use one of {self.supported_security}"
            )
        with self._exclusive:
            key = self._keygen(security_param)
            self.register_key(key)
        logger.info(
            "Generated %s key %s (lambda=%s)",
            self.name,
            key.key_id,
            security_param,
        )
        return key

    def register_key(self, key: KeyMaterial) -> None:
        """Make a key family usable for evaluation.

        Only the public half is kept.

        Args:
            key: key material from :meth:`keygen`.

        Raises:
            KeyMismatchError: key belongs to another backend.

        """
        self._check_backend(key)
        self._register(key.public())

    def _check_backend(self, key: KeyMaterial) -> None:
        if key.backend_id != self.backend_id:
            raise KeyMismatchError(
                f"Key for backend {key.backend_id} used with"
                f" backend {self.backend_id}"
            )

    # encryption

    def encrypt(
        self, key: KeyMaterial, m: Plain, width: int = 32
    ) -> Ciphertext:
        """Encrypt a plaintext.

        Args:
            key: key material.
            m: plaintext, or a bare int tagged with `width`.
            width: width used when `m` is an int.

        Returns:
            A fresh, non-trivial ciphertext.

        """
        scalar = _scalar(m, width)
        self._check_backend(key)
        ct = self._encrypt(key, scalar.value, scalar.width)
        self._count(Op.ENCRYPT, scalar.width)
        return ct

    def trivial_encrypt(self, m: Plain, width: int = 32) -> Ciphertext:
        """Encode a public constant as a noiseless ciphertext.

        Args:
            m: plaintext, or a bare int tagged with `width`.
            width: width used when `m` is an int.

        Returns:
            A trivial ciphertext.

        """
        scalar = _scalar(m, width)
        ct = self._trivial_encrypt(scalar.value, scalar.width)
        with self._stats_lock:
            self._counters[
                OpKey(Op.TRIVIAL_ENCRYPT.value, scalar.width, True)
            ] += 1
        return ct

    def decrypt(self, key: KeyMaterial, c: Ciphertext) -> PlainScalar:
        """Recover the plaintext.

        Args:
            key: key material holding the secret key.
            c: ciphertext produced under `key` (or trivially).

        Returns:
            The plaintext tagged with the ciphertext width.

        """
        self._check_backend(key)
        self._check_ciphertext(c)
        value = self._decrypt(key, c)
        self._count(Op.DECRYPT, c.width)
        return PlainScalar(value, c.width)

    # operators

    def he_eq(self, a: Ciphertext, b: Ciphertext) -> CipherBool:
        """Encrypted ``a == b``."""  # noqa: DAR101,DAR201
        width = self._same_width(a, b)
        result = self._eq(a, b)
        self._count(Op.EQ, width, a, b)
        return result

    def he_lt(self, a: Ciphertext, b: Ciphertext) -> CipherBool:
        """Encrypted ``a < b``."""  # noqa: DAR101,DAR201
        width = self._same_width(a, b)
        result = self._lt(a, b)
        self._count(Op.LT, width, a, b)
        return result

    def he_le(self, a: Ciphertext, b: Ciphertext) -> CipherBool:
        """Encrypted ``a <= b``."""  # noqa: DAR101,DAR201
        width = self._same_width(a, b)
        result = self._le(a, b)
        self._count(Op.LE, width, a, b)
        return result

    def he_max(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        """Encrypted ``max(a, b)``."""  # noqa: DAR101,DAR201
        width = self._same_width(a, b)
        result = self._max(a, b)
        self._count(Op.MAX, width, a, b)
        return result

    def he_min(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        """Encrypted ``min(a, b)``."""  # noqa: DAR101,DAR201
        width = self._same_width(a, b)
        result = self._min(a, b)
        self._count(Op.MIN, width, a, b)
        return result

    def he_and(self, a: CipherBool, b: CipherBool) -> CipherBool:
        """Encrypted conjunction of two booleans."""  # noqa: DAR101,DAR201
        self._booleans(a, b)
        result = self._and(a, b)
        self._count(Op.AND, 1, a, b)
        return result

    def he_or(self, a: CipherBool, b: CipherBool) -> CipherBool:
        """Encrypted disjunction of two booleans."""  # noqa: DAR101,DAR201
        self._booleans(a, b)
        result = self._or(a, b)
        self._count(Op.OR, 1, a, b)
        return result

    def he_add(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        """Encrypted ``(a + b) mod 2**width``."""  # noqa: DAR101,DAR201
        width = self._same_width(a, b)
        result = self._add(a, b)
        self._count(Op.ADD, width, a, b)
        return result

    def he_cmux(
        self, cond: CipherBool, then_ct: Ciphertext, else_ct: Ciphertext
    ) -> Ciphertext:
        """Encrypted ``then_ct if cond else else_ct``.

        Args:
            cond: encrypted selector.
            then_ct: value when `cond` is 1.
            else_ct: value when `cond` is 0.

        Returns:
            The selected value, re-randomized.

        """
        self._booleans(cond)
        width = self._same_width(then_ct, else_ct)
        result = self._cmux(cond, then_ct, else_ct)
        self._count(Op.CMUX, width, then_ct, else_ct)
        return result

    # checks

    def _check_ciphertext(self, *cts: Ciphertext) -> None:
        for ct in cts:
            if ct.backend_id != self.backend_id:
                raise KeyMismatchError(
                    f"Ciphertext from backend {ct.backend_id} used with"
                    f" backend {self.backend_id}"
                )

    def _same_width(self, a: Ciphertext, b: Ciphertext) -> int:
        self._check_ciphertext(a, b)
        if a.width != b.width:
            raise WidthMismatchError(
                f"Operand widths differ: u{a.width} vs u{b.width}"
            )
        return a.width

    def _booleans(self, *cts: Ciphertext) -> None:
        self._check_ciphertext(*cts)
        for ct in cts:
            if not ct.is_bool:
                raise WidthMismatchError(
                    f"Boolean operand expected, got u{ct.width}"
                )

    # hooks

    @abc.abstractmethod
    def _keygen(self, security_param: int) -> KeyMaterial:
        """Generate keys for a supported security level."""

    @abc.abstractmethod
    def _register(self, key: KeyMaterial) -> None:
        """Store the public key material needed to evaluate."""

    @abc.abstractmethod
    def _encrypt(self, key: KeyMaterial, value: int, width: int) -> Ciphertext:
        """Encrypt an in-range value."""

    @abc.abstractmethod
    def _trivial_encrypt(self, value: int, width: int) -> Ciphertext:
        """Encode an in-range public constant."""

    @abc.abstractmethod
    def _decrypt(self, key: KeyMaterial, c: Ciphertext) -> int:
        """Decrypt, raising on key mismatch or corruption."""

    @abc.abstractmethod
    def _eq(self, a: Ciphertext, b: Ciphertext) -> CipherBool:
        ...

    @abc.abstractmethod
    def _lt(self, a: Ciphertext, b: Ciphertext) -> CipherBool:
        ...

    @abc.abstractmethod
    def _le(self, a: Ciphertext, b: Ciphertext) -> CipherBool:
        ...

    @abc.abstractmethod
    def _max(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        ...

    @abc.abstractmethod
    def _min(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        ...

    @abc.abstractmethod
    def _and(self, a: CipherBool, b: CipherBool) -> CipherBool:
        ...

    @abc.abstractmethod
    def _or(self, a: CipherBool, b: CipherBool) -> CipherBool:
        ...

    @abc.abstractmethod
    def _add(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        ...

    @abc.abstractmethod
    def _cmux(
        self, cond: CipherBool, then_ct: Ciphertext, else_ct: Ciphertext
    ) -> Ciphertext:
        ...


def _scalar(m: Plain, width: int) -> PlainScalar:
    return m if isinstance(m, PlainScalar) else PlainScalar(m, width)
