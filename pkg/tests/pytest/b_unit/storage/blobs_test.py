"""Append-only blob segments."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from maskdb.bench.workload import sample_keys
from maskdb.bench.workload import WorkloadSpec
from maskdb.exceptions import BlobNotFoundError
from maskdb.exceptions import ChecksumError
from maskdb.exceptions import StorageFullError
from maskdb.storage.blobs import blob_hash
from maskdb.storage.blobs import BlobStore
from maskdb.storage.blobs import RECORD_OVERHEAD
from maskdb.storage.blobs import SEGMENT_HEADER_SIZE
from maskdb.storage.cache import TieredCache

# Two 50 byte records fit in one segment, a third rolls over.
SMALL_SEGMENT = SEGMENT_HEADER_SIZE + 2 * (50 + RECORD_OVERHEAD) + 10


def _payload(tag: int, size: int = 50) -> bytes:
    return bytes([tag]) * size


@pytest.fixture(name="blobs")
def blobs_(tmp_path):
    """Store with small segments.

    Args:
        tmp_path: pytest fixture.

    Yields:
        The opened store, closed on teardown.

    """
    store = BlobStore(
        tmp_path / "segments",
        segment_size=SMALL_SEGMENT,
        compaction_threshold=0.4,
    )
    yield store
    store.close()


def test_put_get(blobs) -> None:
    """Payloads come back byte for byte under their sha256.

    Args:
        blobs: pytest fixture - see :func:`blobs_`.

    """
    data = b"\x00ciphertext\xff"
    digest = blobs.put_blob(data)
    assert digest == blob_hash(data)
    assert len(digest) == 32
    assert blobs.get_blob(digest) == data
    assert digest in blobs


def test_deduplication(blobs) -> None:
    """Storing a payload twice keeps one record.

    Args:
        blobs: pytest fixture - see :func:`blobs_`.

    """
    first = blobs.put_blob(_payload(1))
    second = blobs.put_blob(_payload(1))
    assert first == second
    assert len(blobs) == 1
    assert blobs.stats()["live_bytes"] == 50


def test_empty_and_oversized(blobs) -> None:
    """Empty payloads and payloads larger than a segment are refused.

    Args:
        blobs: pytest fixture - see :func:`blobs_`.

    """
    with pytest.raises(ValueError, match="empty"):
        blobs.put_blob(b"")
    with pytest.raises(StorageFullError):
        blobs.put_blob(b"x" * SMALL_SEGMENT)


def test_delete(blobs) -> None:
    """Deleted payloads are gone, and deleting twice fails.

    Args:
        blobs: pytest fixture - see :func:`blobs_`.

    """
    digest = blobs.put_blob(_payload(1))
    blobs.delete_blob(digest)
    assert digest not in blobs
    with pytest.raises(BlobNotFoundError):
        blobs.get_blob(digest)
    with pytest.raises(BlobNotFoundError):
        blobs.delete_blob(digest)
    assert blobs.stats()["dead_bytes"] == 50


def test_segments_roll(blobs) -> None:
    """A full segment is sealed and a new one started.

    Args:
        blobs: pytest fixture - see :func:`blobs_`.

    """
    for tag in range(5):
        blobs.put_blob(_payload(tag))
    segments = blobs.segments()
    assert [segment.segment_id for segment in segments] == [0, 1, 2]
    assert [segment.sealed for segment in segments] == [True, True, False]
    assert all(segment.size <= SMALL_SEGMENT for segment in segments)


def test_reopen_rebuilds_index(tmp_path) -> None:
    """Live and deleted payloads survive a restart.

    Args:
        tmp_path: pytest fixture.

    """
    root = tmp_path / "segments"
    with BlobStore(root, segment_size=SMALL_SEGMENT) as blobs:
        kept = [blobs.put_blob(_payload(tag)) for tag in range(3)]
        gone = blobs.put_blob(_payload(9))
        blobs.delete_blob(gone)
    with BlobStore(root, segment_size=SMALL_SEGMENT) as blobs:
        assert sorted(blobs.hashes()) == sorted(kept)
        assert [blobs.get_blob(digest) for digest in kept] == [
            _payload(tag) for tag in range(3)
        ]
        assert gone not in blobs
        fresh = blobs.put_blob(_payload(7))
        assert blobs.get_blob(fresh) == _payload(7)


def test_torn_tail_truncated(tmp_path) -> None:
    """A half-written record at the end of a segment is discarded.

    Args:
        tmp_path: pytest fixture.

    """
    root = tmp_path / "segments"
    with BlobStore(root) as blobs:
        digest = blobs.put_blob(_payload(1))
        path = blobs.segments()[0].path
        size = path.stat().st_size
    with path.open("ab") as stream:
        stream.write(b"\x00" * 20)
    with BlobStore(root) as blobs:
        assert blobs.get_blob(digest) == _payload(1)
        assert len(blobs) == 1
    assert path.stat().st_size == size


def test_checksum_mismatch(tmp_path) -> None:
    """Damaged records fail their checksum on read.

    Args:
        tmp_path: pytest fixture.

    """
    with BlobStore(tmp_path / "segments") as blobs:
        digest = blobs.put_blob(_payload(1))
        path = blobs.segments()[0].path
        raw = bytearray(path.read_bytes())
        raw[-5] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(ChecksumError):
            blobs.get_blob(digest)


def test_compaction_reclaims_sealed(tmp_path) -> None:
    """Sealed segments over the dead ratio are rewritten.

    Args:
        tmp_path: pytest fixture.

    """
    root = tmp_path / "segments"
    with BlobStore(root, segment_size=SMALL_SEGMENT) as blobs:
        digests = [blobs.put_blob(_payload(tag)) for tag in range(5)]
        blobs.delete_blob(digests[0])
        assert blobs.compact() == 50
        ids = [segment.segment_id for segment in blobs.segments()]
        assert 0 not in ids
        assert blobs.stats()["dead_bytes"] == 0
        for tag, digest in enumerate(digests[1:], start=1):
            assert blobs.get_blob(digest) == _payload(tag)
        assert blobs.compact() == 0
    with BlobStore(root, segment_size=SMALL_SEGMENT) as blobs:
        assert digests[0] not in blobs
        assert len(blobs) == 4
        assert blobs.get_blob(digests[1]) == _payload(1)


def test_compaction_below_threshold(blobs) -> None:
    """Segments under the dead ratio are left alone.

    Args:
        blobs: pytest fixture - see :func:`blobs_`.

    """
    digests = [blobs.put_blob(_payload(tag, 20)) for tag in range(4)]
    blobs.put_blob(_payload(9, 120))
    blobs.delete_blob(digests[0])
    assert blobs.compact() == 0


def test_compaction_seals_active(tmp_path) -> None:
    """The active segment is compacted once it crosses the threshold.

    Args:
        tmp_path: pytest fixture.

    """
    with BlobStore(tmp_path / "segments", compaction_threshold=0.5) as blobs:
        first = blobs.put_blob(_payload(1))
        second = blobs.put_blob(_payload(2))
        blobs.delete_blob(first)
        assert blobs.compact() == 50
        assert blobs.get_blob(second) == _payload(2)
        third = blobs.put_blob(_payload(3))
        assert blobs.get_blob(third) == _payload(3)


def test_reads_go_through_cache(tmp_path) -> None:
    """Repeated reads are served from the hot tier.

    Args:
        tmp_path: pytest fixture.

    """
    cache = TieredCache(1024, 1024)
    with BlobStore(tmp_path / "segments", cache=cache) as blobs:
        digest = blobs.put_blob(_payload(1))
        assert cache.tier_of(digest) == "cold"
        for _ in range(3):
            blobs.get_blob(digest)
        assert cache.tier_of(digest) == "hot"
        counters = blobs.stats()["cache"]
        assert counters["misses"] == 1
        assert counters["promotions"] == 1
        assert counters["hot_hits"] == 1
        blobs.clear_cache()
        assert cache.tier_of(digest) == "cold"


@pytest.mark.parametrize(
    "size", [1, 2, 255, 64 * 1024, 1024 * 1024, 4 * 1024 * 1024]
)
def test_payload_sizes(tmp_path, size) -> None:
    """Payloads from one byte to 4 MiB survive a reopen unchanged.

    Args:
        tmp_path: pytest fixture.
        size: pytest parametrized arg.

    """
    root = tmp_path / "segments"
    data = np.random.default_rng(size).bytes(size)
    with BlobStore(root) as blobs:
        digest = blobs.put_blob(data)
        assert blobs.get_blob(digest) == data
        assert blobs.stats()["live_bytes"] == size
    with BlobStore(root) as blobs:
        assert blobs.get_blob(digest) == data


def test_segment_boundaries(tmp_path) -> None:
    """A record filling a segment exactly stays in it; one byte more fails.

    Args:
        tmp_path: pytest fixture.

    """
    root = tmp_path / "segments"
    fits = SMALL_SEGMENT - SEGMENT_HEADER_SIZE - RECORD_OVERHEAD
    full = _payload(1, fits)
    tiny = _payload(2, 1)
    with BlobStore(root, segment_size=SMALL_SEGMENT) as blobs:
        with pytest.raises(StorageFullError):
            blobs.put_blob(_payload(3, fits + 1))
        stored = [blobs.put_blob(full)]
        assert [s.size for s in blobs.segments()] == [SMALL_SEGMENT]

        stored.append(blobs.put_blob(tiny))
        first, second = blobs.segments()
        assert first.size == SMALL_SEGMENT
        assert second.size == SEGMENT_HEADER_SIZE + RECORD_OVERHEAD + 1

        remaining = SMALL_SEGMENT - second.size - RECORD_OVERHEAD
        rest = _payload(4, remaining)
        stored.append(blobs.put_blob(rest))
        assert [s.size for s in blobs.segments()] == [SMALL_SEGMENT] * 2

        stored.append(blobs.put_blob(tiny[:1] * 2))
        assert len(blobs.segments()) == 3
    with BlobStore(root, segment_size=SMALL_SEGMENT) as blobs:
        assert [blobs.get_blob(digest) for digest in stored] == [
            full,
            tiny,
            rest,
            tiny * 2,
        ]


def test_stale_tombstones_do_not_kill_reused_segment(
    tmp_path, monkeypatch
) -> None:
    """Tombstones left by an interrupted compaction are dropped on open.

    A compaction that removed a segment but crashed before rewriting
    the tombstone file leaves entries for that segment id. Once the id
    is handed out again they must not hide the new records.

    Args:
        tmp_path: pytest fixture.
        monkeypatch: pytest fixture.

    """
    root = tmp_path / "segments"
    monkeypatch.setattr(BlobStore, "_rewrite_tombstones", lambda self: None)
    with BlobStore(root, segment_size=SMALL_SEGMENT) as blobs:
        for tag in range(5):
            blobs.put_blob(_payload(tag))
        blobs.delete_blob(blob_hash(_payload(4)))
        assert blobs.compact() == 50
        assert [s.segment_id for s in blobs.segments()] == [0, 1]
    monkeypatch.undo()

    with BlobStore(root, segment_size=SMALL_SEGMENT) as blobs:
        digest = blobs.put_blob(_payload(9))
        assert [s.segment_id for s in blobs.segments()] == [0, 1, 2]
    with BlobStore(root, segment_size=SMALL_SEGMENT) as blobs:
        assert blobs.get_blob(digest) == _payload(9)
        assert len(blobs) == 5


WRITERS = 16
READERS = 64
OPS_PER_WORKER = 128


def test_concurrent_writers_and_readers(tmp_path) -> None:
    """Writers and skewed readers share a store without losing a byte.

    Every acknowledged write reads back identical, before and after a
    reopen. One in five writes stores a payload that is already there.

    Args:
        tmp_path: pytest fixture.

    """
    root = tmp_path / "segments"
    rng = np.random.default_rng(11)
    stored = [rng.bytes(int(size)) for size in rng.integers(1, 2048, 1000)]
    keys = sample_keys(
        WorkloadSpec(seed=11), READERS * OPS_PER_WORKER, len(stored)
    )
    fresh = [
        [rng.bytes(int(size)) for size in rng.integers(1, 2048, count)]
        for count in [OPS_PER_WORKER] * WRITERS
    ]
    for worker, payloads in enumerate(fresh):
        for index in range(0, OPS_PER_WORKER, 5):
            position = (worker * OPS_PER_WORKER + index) % len(stored)
            payloads[index] = stored[position]
    failures = []
    acknowledged = []
    cache = TieredCache(64 * 1024, 256 * 1024)
    with BlobStore(root, segment_size=16 * 1024, cache=cache) as blobs:
        digests = blobs.put_many(stored)

        def write(worker: int) -> None:
            for data in fresh[worker]:
                try:
                    acknowledged.append((blobs.put_blob(data), data))
                except Exception as exc:  # noqa: B902
                    failures.append(exc)

        def read(worker: int) -> None:
            offset = worker * OPS_PER_WORKER
            for key in keys[offset : offset + OPS_PER_WORKER]:
                try:
                    if blobs.get_blob(digests[key]) != stored[key]:
                        failures.append(f"wrong bytes for key {key}")
                except Exception as exc:  # noqa: B902
                    failures.append(exc)

        with ThreadPoolExecutor(max_workers=WRITERS + READERS) as pool:
            futures = [pool.submit(write, w) for w in range(WRITERS)]
            futures += [pool.submit(read, w) for w in range(READERS)]
            for future in futures:
                future.result()

        assert failures == []
        assert len(acknowledged) == WRITERS * OPS_PER_WORKER
        blobs.clear_cache()
        for digest, data in acknowledged:
            assert blobs.get_blob(digest) == data
    with BlobStore(root, segment_size=16 * 1024) as reopened:
        for digest, data in acknowledged + list(zip(digests, stored)):
            assert reopened.get_blob(digest) == data
