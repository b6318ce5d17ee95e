"""Hybrid persistence: ordered metadata plus append-only blob segments."""
from maskdb.storage.blobs import blob_hash
from maskdb.storage.blobs import BlobStore
from maskdb.storage.cache import TieredCache
from maskdb.storage.hybrid import HybridStore
from maskdb.storage.hybrid import MetadataEntry
from maskdb.storage.inline import InlineStore

__all__ = [
    "BlobStore",
    "HybridStore",
    "InlineStore",
    "MetadataEntry",
    "TieredCache",
    "blob_hash",
]
