"""Content-addressed, append-only segment store for ciphertext blobs.

Segment files live in one directory as ``<segment_id:016x>.seg``. Each
starts with a header and holds a sequence of records::

    header := "BSEG" | version (1 byte) | segment_id (8 bytes BE)
    record := sha256 (32 bytes) | length (4 bytes BE) | payload
              | crc32(payload) (4 bytes BE)

Deletions append ``(segment_id, offset)`` pairs to ``tombstones.bin``.
The in-memory index (hash -> location) is rebuilt from both files when
the store opens. Reads use ``os.pread`` on a per-segment descriptor, so
a record is fetched without touching the rest of its segment.

"""
from __future__ import annotations

import hashlib
import logging
import os
import struct
import threading
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Dict
from typing import Iterable
from typing import List
from typing import Optional
from typing import Set
from typing import Tuple

from maskdb.exceptions import BlobNotFoundError
from maskdb.exceptions import ChecksumError
from maskdb.exceptions import StorageFullError
from maskdb.storage.cache import TieredCache

logger = logging.getLogger(__name__)

MAGIC = b"BSEG"
VERSION = 1
HASH_SIZE = 32

_SEGMENT_HEADER = struct.Struct(">4sBQ")
_RECORD_HEADER = struct.Struct(">32sI")
_CHECKSUM = struct.Struct(">I")
_TOMBSTONE = struct.Struct(">QQ")

SEGMENT_HEADER_SIZE = _SEGMENT_HEADER.size
RECORD_OVERHEAD = _RECORD_HEADER.size + _CHECKSUM.size

BlobHash = bytes


def blob_hash(data: bytes) -> BlobHash:
    """Content address of a payload.

    Args:
        data: payload bytes.

    Returns:
        The 32-byte sha256 digest.

    """
    return hashlib.sha256(data).digest()


@dataclass(frozen=True)
class RecordLocation:
    """Where a record starts and how long its payload is."""

    segment_id: int
    offset: int
    length: int


@dataclass
class Segment:
    """Bookkeeping for one segment file."""

    segment_id: int
    path: Path
    size: int
    live_bytes: int = 0
    dead_bytes: int = 0
    sealed: bool = False

    @property
    def dead_ratio(self) -> float:  # noqa: D102
        total = self.live_bytes + self.dead_bytes
        return self.dead_bytes / total if total else 0.0


def _segment_name(segment_id: int) -> str:
    return f"{segment_id:016x}.seg"


def _encode_record(digest: BlobHash, data: bytes) -> bytes:
    return b"".join(
        (
            _RECORD_HEADER.pack(digest, len(data)),
            data,
            _CHECKSUM.pack(zlib.crc32(data)),
        )
    )


class BlobStore:
    """Append-only segments with dedup, tombstones and compaction."""

    def __init__(
        self,
        root: Path,
        segment_size: int = 64 * 1024 * 1024,
        compaction_threshold: float = 0.4,
        cache: Optional[TieredCache] = None,
        fsync: bool = False,
    ) -> None:
        """Open (or create) a store and recover its index.

        Args:
            root: directory holding the segment files.
            segment_size: bytes after which a segment is sealed.
            compaction_threshold: dead ratio at which a sealed segment
                is rewritten by :meth:`compact`.
            cache: optional tiered read cache.
            fsync: fsync the active segment after every append.

        """
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.segment_size = segment_size
        self.compaction_threshold = compaction_threshold
        self.cache = cache
        self.fsync = fsync
        self._lock = threading.RLock()
        self._compaction_lock = threading.Lock()
        self._index: Dict[BlobHash, RecordLocation] = {}
        self._segments: Dict[int, Segment] = {}
        self._fds: Dict[int, int] = {}
        self._retired: List[int] = []
        self._active: Optional[Segment] = None
        self._writer = None
        self._next_id = 0
        self._tombstones = self.root / "tombstones.bin"
        self.recover()

    # ------------------------------------------------------------------
    # recovery

    def recover(self) -> None:
        """Rebuild the index from segment files and tombstones.

        Torn records at the tail of a segment are truncated away, and
        leftovers of an interrupted compaction are removed. Tombstones
        of segments no longer on disk are dropped so their ids can be
        reused.

        """
        with self._lock:
            self._close_files()
            self._index.clear()
            self._segments.clear()
            for leftover in self.root.glob("*.seg.tmp"):
                logger.warning("Removing unfinished segment %s", leftover)
                leftover.unlink()
            dead = self._load_tombstones()
            for path in sorted(self.root.glob("*.seg")):
                segment = self._scan_segment(path, dead)
                if segment is not None:
                    self._segments[segment.segment_id] = segment
            stale = {segment_id for segment_id, _ in dead} - set(
                self._segments
            )
            if stale:
                logger.warning(
                    "Dropping tombstones of removed segments %s",
                    sorted(stale),
                )
                self._rewrite_tombstones()
            self._next_id = max(self._segments, default=-1) + 1
            for segment in self._segments.values():
                segment.sealed = True
                self._fds[segment.segment_id] = os.open(
                    segment.path, os.O_RDONLY
                )
            if self._segments:
                last = self._segments[max(self._segments)]
                if last.size < self.segment_size:
                    last.sealed = False
                    self._activate(last)
            logger.info(
                "Recovered %d blobs in %d segments from %s",
                len(self._index),
                len(self._segments),
                self.root,
            )

    def _load_tombstones(self) -> Set[Tuple[int, int]]:
        if not self._tombstones.exists():
            return set()
        raw = self._tombstones.read_bytes()
        usable = len(raw) - len(raw) % _TOMBSTONE.size
        return {
            _TOMBSTONE.unpack_from(raw, offset)
            for offset in range(0, usable, _TOMBSTONE.size)
        }

    def _scan_segment(
        self, path: Path, dead: Set[Tuple[int, int]]
    ) -> Optional[Segment]:
        with path.open("rb") as stream:
            raw = stream.read()
        if len(raw) < SEGMENT_HEADER_SIZE:
            logger.warning("Removing segment %s with a torn header", path)
            path.unlink()
            return None
        magic, version, segment_id = _SEGMENT_HEADER.unpack_from(raw)
        if magic != MAGIC or version != VERSION:
            logger.warning("Skipping foreign file %s", path)
            return None
        segment = Segment(segment_id, path, SEGMENT_HEADER_SIZE)
        offset = SEGMENT_HEADER_SIZE
        while offset + _RECORD_HEADER.size <= len(raw):
            digest, length = _RECORD_HEADER.unpack_from(raw, offset)
            start = offset + _RECORD_HEADER.size
            end = start + length
            if end + _CHECKSUM.size > len(raw):
                break
            payload = raw[start:end]
            (checksum,) = _CHECKSUM.unpack_from(raw, end)
            if checksum != zlib.crc32(payload):
                break
            if digest != blob_hash(payload):
                break
            if (segment_id, offset) in dead:
                segment.dead_bytes += length
            else:
                self._supersede(digest, segment)
                self._index[digest] = RecordLocation(
                    segment_id, offset, length
                )
                segment.live_bytes += length
            offset = end + _CHECKSUM.size
        if offset != len(raw):
            logger.warning(
                "Truncating %d torn bytes from %s", len(raw) - offset, path
            )
            with path.open("r+b") as stream:
                stream.truncate(offset)
        segment.size = offset
        return segment

    def _supersede(self, digest: BlobHash, scanning: Segment) -> None:
        previous = self._index.get(digest)
        if previous is None:
            return
        owner = self._segments.get(previous.segment_id, scanning)
        owner.live_bytes -= previous.length
        owner.dead_bytes += previous.length

    # ------------------------------------------------------------------
    # writes

    def _activate(self, segment: Segment) -> None:
        if self._writer is not None:
            self._writer.close()
        self._active = segment
        self._writer = segment.path.open("ab")

    def _roll(self) -> Segment:
        if self._active is not None:
            self._active.sealed = True
            logger.debug("Sealed segment %d", self._active.segment_id)
        segment = self._create_segment(self._next_id)
        self._next_id += 1
        self._activate(segment)
        return segment

    def _create_segment(self, segment_id: int, suffix: str = "") -> Segment:
        path = self.root / (_segment_name(segment_id) + suffix)
        with path.open("wb") as stream:
            stream.write(_SEGMENT_HEADER.pack(MAGIC, VERSION, segment_id))
        segment = Segment(segment_id, path, SEGMENT_HEADER_SIZE)
        if not suffix:
            self._segments[segment_id] = segment
            self._fds[segment_id] = os.open(path, os.O_RDONLY)
        return segment

    def _append(self, digest: BlobHash, data: bytes) -> RecordLocation:
        record = _encode_record(digest, data)
        if len(record) + SEGMENT_HEADER_SIZE > self.segment_size:
            raise StorageFullError(
                f"A {len(data)} byte blob does not fit in a"
                f" {self.segment_size} byte segment"
            )
        segment = self._active
        if segment is None or segment.size + len(record) > self.segment_size:
            segment = self._roll()
        location = RecordLocation(segment.segment_id, segment.size, len(data))
        self._writer.write(record)
        segment.size += len(record)
        segment.live_bytes += len(data)
        self._index[digest] = location
        return location

    def _flush(self) -> None:
        self._writer.flush()
        if self.fsync:
            os.fsync(self._writer.fileno())

    def put_blob(self, data: bytes) -> BlobHash:
        """Store a payload, deduplicating by content.

        Args:
            data: non-empty payload.

        Returns:
            Its content hash.

        Raises:
            ValueError: empty payload.
            StorageFullError: the payload cannot fit in one segment.

        """
        return self.put_many([data])[0]

    def put_many(self, blobs: Iterable[bytes]) -> List[BlobHash]:
        """Store several payloads with a single flush.

        Args:
            blobs: non-empty payloads.

        Returns:
            Their hashes, in order.

        """
        digests = []
        with self._lock:
            try:
                for data in blobs:
                    if not data:
                        raise ValueError("Cannot store an empty blob")
                    digest = blob_hash(data)
                    if digest not in self._index:
                        self._append(digest, bytes(data))
                    digests.append(digest)
            finally:
                if self._writer is not None:
                    self._flush()
        return digests

    # ------------------------------------------------------------------
    # reads

    def __contains__(self, digest: BlobHash) -> bool:
        return digest in self._index

    def __len__(self) -> int:
        return len(self._index)

    def hashes(self) -> List[BlobHash]:  # noqa: D102
        with self._lock:
            return list(self._index)

    def _read(self, location: RecordLocation, fd: int) -> bytes:
        size = location.length + RECORD_OVERHEAD
        raw = os.pread(fd, size, location.offset)
        if len(raw) != size:
            raise ChecksumError(
                f"Short read in segment {location.segment_id}"
                f" at offset {location.offset}"
            )
        digest, length = _RECORD_HEADER.unpack_from(raw)
        payload = raw[_RECORD_HEADER.size : _RECORD_HEADER.size + length]
        (checksum,) = _CHECKSUM.unpack_from(raw, size - _CHECKSUM.size)
        if length != location.length or checksum != zlib.crc32(payload):
            raise ChecksumError(
                f"Checksum mismatch in segment {location.segment_id}"
                f" at offset {location.offset}"
            )
        return payload

    def get_blob(self, digest: BlobHash) -> bytes:
        """Fetch a payload.

        Args:
            digest: content hash from :meth:`put_blob`.

        Returns:
            The exact stored bytes.

        Raises:
            BlobNotFoundError: unknown or deleted hash.
            ChecksumError: the record on disk is damaged.

        """
        if self.cache is not None:
            cached = self.cache.get(digest)
            if cached is not None:
                return cached
        with self._lock:
            location = self._index.get(digest)
            if location is None:
                raise BlobNotFoundError(f"No blob {digest.hex()}")
            fd = self._fds[location.segment_id]
        payload = self._read(location, fd)
        if self.cache is not None:
            self.cache.put(digest, payload)
        return payload

    # ------------------------------------------------------------------
    # deletion and compaction

    def delete_blob(self, digest: BlobHash) -> None:
        """Mark a payload dead.

        Args:
            digest: content hash.

        Raises:
            BlobNotFoundError: unknown or already deleted hash.

        """
        with self._lock:
            location = self._index.pop(digest, None)
            if location is None:
                raise BlobNotFoundError(f"No blob {digest.hex()}")
            segment = self._segments[location.segment_id]
            segment.live_bytes -= location.length
            segment.dead_bytes += location.length
            self._write_tombstone(location)
        if self.cache is not None:
            self.cache.discard(digest)

    def clear_cache(self) -> None:
        """Drop cached records so the next reads go to the segments."""
        if self.cache is not None:
            self.cache.clear()

    def _write_tombstone(self, location: RecordLocation) -> None:
        with self._tombstones.open("ab") as stream:
            stream.write(_TOMBSTONE.pack(location.segment_id, location.offset))
            if self.fsync:
                os.fsync(stream.fileno())

    def segments(self) -> List[Segment]:
        """Snapshot of segment bookkeeping, by id.

        Returns:
            Copies of every segment record.

        """
        with self._lock:
            return [
                Segment(**vars(segment))
                for _, segment in sorted(self._segments.items())
            ]

    def compact(self) -> int:
        """Rewrite sealed segments whose dead ratio reached the threshold.

        Only one compaction runs at a time; reads continue meanwhile.

        Returns:
            Payload bytes reclaimed.

        """
        with self._compaction_lock:
            with self._lock:
                active = self._active
                if (
                    active is not None
                    and active.dead_bytes
                    and active.dead_ratio >= self.compaction_threshold
                ):
                    active.sealed = True
                    self._writer.close()
                    self._writer = None
                    self._active = None
                candidates = [
                    segment
                    for _, segment in sorted(self._segments.items())
                    if segment.sealed
                    and segment.dead_bytes
                    and segment.dead_ratio >= self.compaction_threshold
                ]
            reclaimed = 0
            for segment in candidates:
                reclaimed += self._compact_segment(segment)
            if reclaimed:
                self._rewrite_tombstones()
                logger.info(
                    "Compaction reclaimed %d bytes from %d segments",
                    reclaimed,
                    len(candidates),
                )
            return reclaimed

    def _compact_segment(self, segment: Segment) -> int:
        with self._lock:
            live = [
                (digest, location)
                for digest, location in self._index.items()
                if location.segment_id == segment.segment_id
            ]
            fd = self._fds[segment.segment_id]
            new_id = self._next_id if live else None
            if new_id is not None:
                self._next_id += 1
        moved: Dict[BlobHash, Tuple[RecordLocation, RecordLocation]] = {}
        replacement = None
        if live:
            replacement = self._create_segment(new_id, suffix=".tmp")
            try:
                with replacement.path.open("ab") as stream:
                    for digest, location in sorted(
                        live, key=lambda item: item[1].offset
                    ):
                        payload = self._read(location, fd)
                        record = _encode_record(digest, payload)
                        moved[digest] = (
                            location,
                            RecordLocation(
                                new_id, replacement.size, len(payload)
                            ),
                        )
                        stream.write(record)
                        replacement.size += len(record)
                        replacement.live_bytes += len(payload)
                    stream.flush()
                    os.fsync(stream.fileno())
            except Exception:
                replacement.path.unlink()
                raise
            final = self.root / _segment_name(new_id)
            os.replace(replacement.path, final)
            replacement.path = final
            replacement.sealed = True
        with self._lock:
            reclaimed = segment.dead_bytes
            if replacement is not None:
                self._segments[new_id] = replacement
                self._fds[new_id] = os.open(replacement.path, os.O_RDONLY)
                for digest, (old, new) in moved.items():
                    if self._index.get(digest) == old:
                        self._index[digest] = new
                    else:
                        replacement.live_bytes -= new.length
                        replacement.dead_bytes += new.length
                        self._write_tombstone(new)
            del self._segments[segment.segment_id]
            self._retired.append(self._fds.pop(segment.segment_id))
            segment.path.unlink()
        logger.debug(
            "Compacted segment %d into %s",
            segment.segment_id,
            new_id if new_id is not None else "nothing",
        )
        return reclaimed

    def _rewrite_tombstones(self) -> None:
        with self._lock:
            if not self._tombstones.exists():
                return
            raw = self._tombstones.read_bytes()
            usable = len(raw) - len(raw) % _TOMBSTONE.size
            kept = [
                raw[offset : offset + _TOMBSTONE.size]
                for offset in range(0, usable, _TOMBSTONE.size)
                if _TOMBSTONE.unpack_from(raw, offset)[0] in self._segments
            ]
            scratch = self._tombstones.with_suffix(".tmp")
            scratch.write_bytes(b"".join(kept))
            os.replace(scratch, self._tombstones)

    # ------------------------------------------------------------------
    # lifecycle

    def stats(self) -> dict:
        """Counters for monitoring.

        Returns:
            Segment count, live/dead bytes and cache counters.

        """
        with self._lock:
            data = {
                "blobs": len(self._index),
                "segments": len(self._segments),
                "live_bytes": sum(
                    segment.live_bytes for segment in self._segments.values()
                ),
                "dead_bytes": sum(
                    segment.dead_bytes for segment in self._segments.values()
                ),
            }
        if self.cache is not None:
            data["cache"] = vars(self.cache.stats).copy()
        return data

    def _close_files(self) -> None:
        if self._writer is not None:
            self._writer.close()
            self._writer = None
        self._active = None
        for fd in list(self._fds.values()) + self._retired:
            os.close(fd)
        self._fds.clear()
        self._retired.clear()

    def close(self) -> None:
        """Flush and release every file descriptor."""
        with self._lock:
            self._close_files()

    def __enter__(self) -> BlobStore:
        return self

    def __exit__(self, *exc) -> None:
        self.close()
