"""Ciphertext bytes stored inline as metadata values.

The benchmark harness runs the same scenarios against this target and
against :class:`maskdb.storage.blobs.BlobStore`, comparing a store that
keeps large values next to its keys with one that separates them.

"""
from __future__ import annotations

from typing import Iterable
from typing import List

from maskdb.exceptions import BlobNotFoundError
from maskdb.storage.blobs import blob_hash
from maskdb.storage.blobs import BlobHash
from maskdb.storage.metadata import Backend as MetadataBackend

INLINE_PREFIX = "i/"


class InlineStore:
    """Content-addressed puts and gets on a metadata store."""

    def __init__(self, metadata: MetadataBackend) -> None:
        """Wrap a metadata store.

        Args:
            metadata: where the payloads go.

        """
        self.metadata = metadata

    def put_blob(self, data: bytes) -> BlobHash:  # noqa: D102
        return self.put_many([data])[0]

    def put_many(self, blobs: Iterable[bytes]) -> List[BlobHash]:
        """Store payloads in one atomic batch.

        Args:
            blobs: non-empty payloads.

        Returns:
            Their hashes, in order.

        """
        batch = {}
        digests = []
        for data in blobs:
            if not data:
                raise ValueError("Cannot store an empty blob")
            digest = blob_hash(data)
            batch[INLINE_PREFIX + digest.hex()] = data
            digests.append(digest)
        self.metadata.write_batch(batch)
        return digests

    def get_blob(self, digest: BlobHash) -> bytes:  # noqa: D102
        data = self.metadata.get(INLINE_PREFIX + digest.hex())
        if data is None:
            raise BlobNotFoundError(f"No inline value {digest.hex()}")
        return data

    def clear_cache(self) -> None:
        """Nothing is cached in process."""

    def close(self) -> None:  # noqa: D102
        self.metadata.close()
