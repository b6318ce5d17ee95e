"""Metadata stores, selected by uri scheme (``sqlite://``, ``memory://``)."""
from maskdb.storage.metadata.base import Backend

__all__ = ["Backend"]
