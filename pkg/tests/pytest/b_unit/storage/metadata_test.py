"""Ordered metadata stores and the inline comparison target."""
from __future__ import annotations

import pytest

from maskdb.exceptions import BackendUnavailableError
from maskdb.exceptions import BlobNotFoundError
from maskdb.storage.blobs import blob_hash
from maskdb.storage.inline import InlineStore
from maskdb.storage.metadata import Backend

SCHEMES = ["memory", "sqlite"]


@pytest.fixture(name="metadata", params=SCHEMES)
def metadata_(request, tmp_path):
    """Every metadata store.

    Args:
        request: pytest fixture - parametrized scheme.
        tmp_path: pytest fixture.

    Yields:
        The store, closed on teardown.

    """
    uri = {
        "memory": "memory://",
        "sqlite": f"sqlite://{tmp_path / 'meta' / 'metadata.db'}",
    }[request.param]
    store = Backend.from_uri(uri)
    yield store
    store.close()


def test_get_put_delete(metadata) -> None:
    """Single-key operations.

    Args:
        metadata: pytest fixture - see :func:`metadata_`.

    """
    assert metadata.get("k") is None
    metadata.put("k", b"v1")
    metadata.put("k", b"v2")
    assert metadata.get("k") == b"v2"
    metadata.delete("k")
    metadata.delete("k")
    assert metadata.get("k") is None


def test_scan_prefix_is_ordered(metadata) -> None:
    """Prefix scans return matching keys in key order.

    Args:
        metadata: pytest fixture - see :func:`metadata_`.

    """
    metadata.write_batch(
        {
            "t/a/00000000000000000010/x": b"10",
            "t/a/00000000000000000002/x": b"2",
            "t/ab/00000000000000000001/x": b"other table",
            "c/a": b"catalog",
        }
    )
    keys = [key for key, _ in metadata.scan_prefix("t/a/")]
    assert keys == [
        "t/a/00000000000000000002/x",
        "t/a/00000000000000000010/x",
    ]
    assert list(metadata.scan_prefix("z/")) == []


def test_batch_applies_deletes_and_puts(metadata) -> None:
    """A batch removes and sets keys together.

    Args:
        metadata: pytest fixture - see :func:`metadata_`.

    """
    metadata.write_batch({"a": b"1", "b": b"2"})
    metadata.write_batch({"c": b"3"}, ["a", "missing"])
    assert [key for key, _ in metadata.scan_prefix("")] == ["b", "c"]


def test_sqlite_persists(tmp_path) -> None:
    """Values survive reopening the database file.

    Args:
        tmp_path: pytest fixture.

    """
    uri = f"sqlite://{tmp_path / 'metadata.db'}"
    store = Backend.from_uri(uri)
    store.put("k", b"\x00\xff")
    store.close()
    reopened = Backend.from_uri(uri)
    assert reopened.get("k") == b"\x00\xff"
    reopened.close()


def test_unknown_scheme() -> None:
    """Schemes without a module are unavailable."""
    with pytest.raises(BackendUnavailableError):
        Backend.from_uri("leveldb:///tmp/x")


def test_inline_store(metadata) -> None:
    """Inline values are addressed by content like blobs.

    Args:
        metadata: pytest fixture - see :func:`metadata_`.

    """
    inline = InlineStore(metadata)
    digests = inline.put_many([b"one", b"two"])
    assert digests == [blob_hash(b"one"), blob_hash(b"two")]
    assert inline.get_blob(digests[1]) == b"two"
    assert inline.put_blob(b"one") == digests[0]
    with pytest.raises(BlobNotFoundError):
        inline.get_blob(blob_hash(b"three"))
    with pytest.raises(ValueError, match="empty"):
        inline.put_blob(b"")
