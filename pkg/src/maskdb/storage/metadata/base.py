"""Ordered key-value metadata store interface and factory."""
from __future__ import annotations

import abc
import importlib
from typing import Iterable
from typing import Iterator
from typing import Mapping
from typing import Optional
from typing import Tuple
from typing import Type
from urllib.parse import urlparse

from maskdb.exceptions import BackendUnavailableError

MetadataUri = str


class Backend(abc.ABC):
    """Embedded ordered key-value store with atomic batches.

    This class has three purposes:
        * Interface for custom stores.
        * Skeleton for their internal workings.
        * Factory to choose an implementation from a uri.

    Keys are text and sort bytewise; values are opaque bytes.

    """

    def __init__(self, uri: MetadataUri) -> None:
        """Initialize a store from its uri.

        Args:
            uri: ``sqlite:///path/to/file.db`` or ``memory://``.

        """
        self.uri = uri
        self.path = urlparse(uri).path
        self.connect()

    @classmethod
    def from_uri(cls: Type[Backend], uri: MetadataUri) -> Backend:
        """Factory to select a store from its scheme.

        Args:
            uri: connection string.

        Returns:
            The instantiated store for the requested scheme.

        Raises:
            BackendUnavailableError: unknown scheme.

        """
        scheme = urlparse(uri).scheme
        try:
            module = importlib.import_module(f"{__package__}.{scheme}")
        except ImportError as exc:
            raise BackendUnavailableError(
                f"No metadata store for scheme '{scheme}'"
            ) from exc
        return module.Backend(uri=uri)

    @abc.abstractmethod
    def connect(self) -> None:
        """Open the underlying storage."""

    @abc.abstractmethod
    def get(self, key: str) -> Optional[bytes]:
        """Read one value.

        Args:
            key: the key.

        Returns:
            The value, or ``None`` when absent.

        """

    @abc.abstractmethod
    def write_batch(
        self, puts: Mapping[str, bytes], deletes: Iterable[str] = ()
    ) -> None:
        """Apply puts and deletes atomically.

        Args:
            puts: keys to set.
            deletes: keys to remove; missing keys are ignored.

        """

    @abc.abstractmethod
    def scan_prefix(self, prefix: str) -> Iterator[Tuple[str, bytes]]:
        """Iterate a key range in key order.

        Args:
            prefix: common key prefix.

        Yields:
            ``(key, value)`` pairs.

        """

    def put(self, key: str, value: bytes) -> None:  # noqa: D102
        self.write_batch({key: value})

    def delete(self, key: str) -> None:  # noqa: D102
        self.write_batch({}, (key,))

    def close(self) -> None:
        """Release resources."""
