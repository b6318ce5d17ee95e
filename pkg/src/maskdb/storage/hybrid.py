"""Hash indirection between ordered metadata and the blob segments.

Metadata key layout (all values JSON unless noted)::

    c/<table>                          table catalog
    t/<table>/<row_id:020d>/<column>   one cell: key_hash -> value_hash
    r/<hash hex>                       reference count (ascii int)

Both hashes of a cell hold a reference. Writes put blobs first and
commit the metadata batch second, so an interrupted insert leaves
unreferenced blobs but never dangling metadata; recovery deletes them.

"""
from __future__ import annotations

import json
import logging
import threading
import time
from collections import Counter
from dataclasses import dataclass
from dataclasses import field
from dataclasses import replace
from pathlib import Path
from typing import Dict
from typing import Iterator
from typing import List
from typing import Mapping
from typing import Optional
from typing import Sequence
from typing import Tuple

from maskdb.config import Settings
from maskdb.crypto import codec
from maskdb.crypto.types import Ciphertext
from maskdb.exceptions import BlobNotFoundError
from maskdb.exceptions import CorruptCiphertextError
from maskdb.exceptions import CorruptionError
from maskdb.exceptions import SchemaMismatchError
from maskdb.exceptions import UnknownCellError
from maskdb.exceptions import UnknownTableError
from maskdb.storage.blobs import BlobHash
from maskdb.storage.blobs import BlobStore
from maskdb.storage.cache import TieredCache
from maskdb.storage.metadata import Backend as MetadataBackend
from maskdb.types import ColumnDef
from maskdb.types import EncryptedRow
from maskdb.types import TableSchema

logger = logging.getLogger(__name__)

CATALOG_PREFIX = "c/"
CELL_PREFIX = "t/"
REFS_PREFIX = "r/"


def cell_key(table: str, row_id: int, column: str) -> str:  # noqa: D103
    return f"{CELL_PREFIX}{table}/{row_id:020d}/{column}"


def _row_prefix(table: str, row_id: int) -> str:
    return f"{CELL_PREFIX}{table}/{row_id:020d}/"


def _table_prefix(table: str) -> str:
    return f"{CELL_PREFIX}{table}/"


def _refs_key(digest: BlobHash) -> str:
    return f"{REFS_PREFIX}{digest.hex()}"


@dataclass(frozen=True)
class MetadataEntry:
    """One cell: which blob holds it, under which row key."""

    table: str
    row_id: int
    column: str
    key_hash: BlobHash
    value_hash: BlobHash
    owner_id: str = ""
    timestamp: float = field(default_factory=time.time)

    @property
    def key(self) -> str:  # noqa: D102
        return cell_key(self.table, self.row_id, self.column)

    @property
    def hashes(self) -> Tuple[BlobHash, BlobHash]:
        """Blobs this entry holds a reference to."""
        return self.key_hash, self.value_hash

    def to_bytes(self) -> bytes:  # noqa: D102
        return json.dumps(
            {
                "table": self.table,
                "row_id": self.row_id,
                "column": self.column,
                "key_hash": self.key_hash.hex(),
                "value_hash": self.value_hash.hex(),
                "owner_id": self.owner_id,
                "timestamp": self.timestamp,
            },
            separators=(",", ":"),
        ).encode()

    @classmethod
    def from_bytes(cls, raw: bytes) -> MetadataEntry:
        """Decode a stored entry.

        Args:
            raw: value read from the metadata store.

        Returns:
            The entry.

        Raises:
            CorruptionError: the value is not a metadata entry.

        """
        try:
            data = json.loads(raw)
            return cls(
                table=data["table"],
                row_id=int(data["row_id"]),
                column=data["column"],
                key_hash=bytes.fromhex(data["key_hash"]),
                value_hash=bytes.fromhex(data["value_hash"]),
                owner_id=data.get("owner_id", ""),
                timestamp=float(data.get("timestamp", 0.0)),
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise CorruptionError(f"Unreadable metadata entry: {exc}") from exc


class HybridStore:
    """Tables of ciphertext cells over a blob store and a metadata store."""

    def __init__(
        self,
        root: Path,
        metadata: Optional[MetadataBackend] = None,
        segment_size: int = 64 * 1024 * 1024,
        compaction_threshold: float = 0.4,
        cache_hot: int = 16 * 1024 * 1024,
        cache_warm: int = 128 * 1024 * 1024,
        fsync: bool = False,
    ) -> None:
        """Open both halves and reconcile them.

        Args:
            root: directory for segments and the sqlite metadata file.
            metadata: metadata store; defaults to ``<root>/metadata.db``.
            segment_size: blob segment size in bytes.
            compaction_threshold: dead ratio triggering compaction.
            cache_hot: hot tier capacity in bytes.
            cache_warm: warm tier capacity in bytes.
            fsync: fsync blob appends.

        """
        self.root = Path(root).resolve()
        self.root.mkdir(parents=True, exist_ok=True)
        self.cache = TieredCache(cache_hot, cache_warm)
        self.blobs = BlobStore(
            self.root / "segments",
            segment_size=segment_size,
            compaction_threshold=compaction_threshold,
            cache=self.cache,
            fsync=fsync,
        )
        self.metadata = metadata or MetadataBackend.from_uri(
            f"sqlite://{self.root / 'metadata.db'}"
        )
        self._write_lock = threading.RLock()
        self.recover()

    @classmethod
    def from_settings(cls, settings: Settings) -> HybridStore:
        """Open the store configured by settings.

        Args:
            settings: server configuration.

        Returns:
            The opened store.

        """
        return cls(
            settings.store_dir,
            segment_size=settings.segment_size,
            compaction_threshold=settings.compaction_threshold,
            cache_hot=settings.cache_hot,
            cache_warm=settings.cache_warm,
        )

    # ------------------------------------------------------------------
    # blobs

    def put_blob(self, data: bytes) -> BlobHash:  # noqa: D102
        return self.blobs.put_blob(data)

    def get_blob(self, digest: BlobHash) -> bytes:  # noqa: D102
        return self.blobs.get_blob(digest)

    def delete_blob(self, digest: BlobHash) -> None:  # noqa: D102
        self.blobs.delete_blob(digest)

    def compact(self) -> int:  # noqa: D102
        return self.blobs.compact()

    # ------------------------------------------------------------------
    # catalog

    def catalog(self) -> Dict[str, TableSchema]:
        """Every table schema, by name."""
        return {
            key[len(CATALOG_PREFIX) :]: TableSchema.from_dict(json.loads(raw))
            for key, raw in self.metadata.scan_prefix(CATALOG_PREFIX)
        }

    def schema(self, table: str) -> TableSchema:
        """Catalog entry of one table.

        Args:
            table: table name.

        Returns:
            Its schema, with live row count.

        Raises:
            UnknownTableError: no such table.

        """
        raw = self.metadata.get(CATALOG_PREFIX + table)
        if raw is None:
            raise UnknownTableError(f"Unknown table '{table}'")
        return TableSchema.from_dict(json.loads(raw))

    def _catalog_value(self, schema: TableSchema) -> Dict[str, bytes]:
        return {
            CATALOG_PREFIX
            + schema.name: json.dumps(schema.to_dict()).encode()
        }

    def ensure_table(
        self, table: str, columns: Sequence[ColumnDef], owner_id: str = ""
    ) -> TableSchema:
        """Create a table, or check an existing one matches.

        Args:
            table: table name.
            columns: column definitions in order.
            owner_id: owner recorded on creation.

        Returns:
            The schema.

        Raises:
            SchemaMismatchError: the table exists with other columns.

        """
        with self._write_lock:
            try:
                existing = self.schema(table)
            except UnknownTableError:
                schema = TableSchema(table, tuple(columns), owner_id)
                self.metadata.write_batch(self._catalog_value(schema))
                logger.info(
                    "Created table '%s' with %d columns", table, len(columns)
                )
                return schema
        if existing.columns != tuple(columns):
            raise SchemaMismatchError(
                f"Table '{table}' has columns {existing.column_names}"
            )
        return existing

    # ------------------------------------------------------------------
    # metadata

    def _refcounts(self, digests) -> Counter:
        counts: Counter = Counter()
        for digest in set(digests):
            raw = self.metadata.get(_refs_key(digest))
            counts[digest] = int(raw) if raw else 0
        return counts

    def _commit(
        self,
        puts: Dict[str, bytes],
        deletes: List[str],
        deltas: Mapping[BlobHash, int],
    ) -> None:
        counts = self._refcounts(deltas)
        released = []
        for digest, delta in deltas.items():
            count = counts[digest] + delta
            if count > 0:
                puts[_refs_key(digest)] = str(count).encode()
            else:
                deletes.append(_refs_key(digest))
                released.append(digest)
        self.metadata.write_batch(puts, deletes)
        for digest in released:
            try:
                self.blobs.delete_blob(digest)
            except BlobNotFoundError:
                logger.warning("Released blob %s was already gone", digest)

    def metadata_put(self, entry: MetadataEntry) -> None:
        """Store one cell entry, creating or widening the table.

        Args:
            entry: the cell; both hashes must already be stored.

        Raises:
            BlobNotFoundError: a hash does not resolve.
            SchemaMismatchError: the blob width disagrees with the column.

        """
        for digest in (entry.key_hash, entry.value_hash):
            if digest not in self.blobs:
                raise BlobNotFoundError(f"No blob {digest.hex()}")
        try:
            width = codec.decode(self.blobs.get_blob(entry.value_hash)).width
        except CorruptCiphertextError as exc:
            raise CorruptionError(
                f"Cell blob is not a ciphertext: {exc}"
            ) from exc
        with self._write_lock:
            try:
                schema = self.schema(entry.table)
            except UnknownTableError:
                schema = TableSchema(
                    entry.table,
                    (ColumnDef(entry.column, width),),
                    entry.owner_id,
                )
            if entry.column not in schema.column_names:
                schema = replace(
                    schema,
                    columns=schema.columns + (ColumnDef(entry.column, width),),
                )
            if schema.column(entry.column).width != width:
                raise SchemaMismatchError(
                    f"Column '{entry.column}' is"
                    f" u{schema.column(entry.column).width}, got u{width}"
                )
            deltas: Counter = Counter(entry.hashes)
            old = self.metadata.get(entry.key)
            if old is not None:
                deltas.subtract(MetadataEntry.from_bytes(old).hashes)
            elif not any(
                True
                for _ in self.metadata.scan_prefix(
                    _row_prefix(entry.table, entry.row_id)
                )
            ):
                schema = schema.with_counts(
                    schema.row_count + 1,
                    max(schema.next_row_id, entry.row_id + 1),
                )
            puts = {entry.key: entry.to_bytes()}
            puts.update(self._catalog_value(schema))
            self._commit(puts, [], deltas)

    def metadata_get(
        self, table: str, row_id: int, column: str
    ) -> MetadataEntry:
        """Read one cell entry.

        Args:
            table: table name.
            row_id: row id.
            column: column name.

        Returns:
            The entry.

        Raises:
            UnknownTableError: no such table.
            UnknownCellError: no such cell.

        """
        self.schema(table)
        raw = self.metadata.get(cell_key(table, row_id, column))
        if raw is None:
            raise UnknownCellError(
                f"No cell ({table}, {row_id}, {column})"
            )
        return MetadataEntry.from_bytes(raw)

    def scan_table(self, table: str) -> Iterator[List[MetadataEntry]]:
        """Stream a table's entries grouped by row, in row id order.

        Args:
            table: table name.

        Yields:
            The entries of one live row.

        Raises:
            UnknownTableError: no such table.

        """
        self.schema(table)
        group: List[MetadataEntry] = []
        for _, raw in self.metadata.scan_prefix(_table_prefix(table)):
            entry = MetadataEntry.from_bytes(raw)
            if group and group[0].row_id != entry.row_id:
                yield group
                group = []
            group.append(entry)
        if group:
            yield group

    def fetch_row(
        self,
        group: Sequence[MetadataEntry],
        schema: Optional[TableSchema] = None,
    ) -> EncryptedRow:
        """Load and decode the ciphertexts of one row.

        Args:
            group: entries from :meth:`scan_table`.
            schema: catalog entry; read from the store when omitted.

        Returns:
            The row, cells in catalog column order.

        Raises:
            CorruptionError: a cell or its blob is missing or unreadable.

        """
        schema = schema or self.schema(group[0].table)
        by_column = {entry.column: entry for entry in group}
        cells = []
        for column in schema.columns:
            entry = by_column.get(column.name)
            if entry is None:
                raise CorruptionError(
                    f"Row {group[0].row_id} of '{schema.name}' has no"
                    f" '{column.name}' cell"
                )
            try:
                raw = self.blobs.get_blob(entry.value_hash)
                cells.append(codec.decode(raw))
            except (BlobNotFoundError, CorruptCiphertextError) as exc:
                raise CorruptionError(
                    f"Dangling cell ({schema.name}, {entry.row_id},"
                    f" {entry.column}): {exc}"
                ) from exc
        return EncryptedRow(group[0].row_id, tuple(cells)).check(schema)

    def rows(self, table: str) -> Iterator[EncryptedRow]:
        """Every live row of a table, in row id order.

        Args:
            table: table name.

        Yields:
            Decoded rows.

        """
        schema = self.schema(table)
        for group in self.scan_table(table):
            yield self.fetch_row(group, schema)

    # ------------------------------------------------------------------
    # rows

    def insert_row(
        self, table: str, cells: Sequence[Ciphertext], owner_id: str = ""
    ) -> int:
        """Append a row of ciphertexts.

        Args:
            table: existing table name.
            cells: one ciphertext per column, catalog order.
            owner_id: recorded on every entry.

        Returns:
            The new row id.

        Raises:
            UnknownTableError: no such table.
            SchemaMismatchError: wrong cell count or widths.

        """
        EncryptedRow(-1, tuple(cells)).check(self.schema(table))
        payloads = [codec.encode(cell) for cell in cells]
        with self._write_lock:
            digests = self.blobs.put_many(payloads)
            schema = self.schema(table)
            row_id = schema.next_row_id
            now = time.time()
            puts = {}
            deltas: Counter = Counter()
            for column, digest in zip(schema.columns, digests):
                entry = MetadataEntry(
                    table=table,
                    row_id=row_id,
                    column=column.name,
                    key_hash=digests[0],
                    value_hash=digest,
                    owner_id=owner_id,
                    timestamp=now,
                )
                puts[entry.key] = entry.to_bytes()
                deltas.update(entry.hashes)
            puts.update(
                self._catalog_value(
                    schema.with_counts(schema.row_count + 1, row_id + 1)
                )
            )
            self._commit(puts, [], deltas)
        logger.debug("Inserted row %d into '%s'", row_id, table)
        return row_id

    def delete_row(self, table: str, row_id: int) -> None:
        """Remove a row and release its blobs.

        Args:
            table: table name.
            row_id: row id.

        Raises:
            UnknownTableError: no such table.
            UnknownCellError: no such row.

        """
        with self._write_lock:
            schema = self.schema(table)
            entries = [
                MetadataEntry.from_bytes(raw)
                for _, raw in self.metadata.scan_prefix(
                    _row_prefix(table, row_id)
                )
            ]
            if not entries:
                raise UnknownCellError(f"No row {row_id} in '{table}'")
            deltas: Counter = Counter()
            for entry in entries:
                deltas.subtract(entry.hashes)
            puts = self._catalog_value(
                schema.with_counts(schema.row_count - 1, schema.next_row_id)
            )
            self._commit(puts, [entry.key for entry in entries], deltas)
        logger.info("Deleted row %d from '%s'", row_id, table)

    # ------------------------------------------------------------------
    # recovery

    def recover(self) -> int:
        """Drop rows whose blobs are gone and rebuild counters.

        Blobs no cell references, left by an insert that never
        committed its metadata, are deleted. Call it only while no
        writer is between storing a blob and recording its cell.

        Returns:
            Number of rows dropped.

        """
        with self._write_lock:
            rows: Dict[tuple, List[MetadataEntry]] = {}
            for _, raw in self.metadata.scan_prefix(CELL_PREFIX):
                entry = MetadataEntry.from_bytes(raw)
                rows.setdefault((entry.table, entry.row_id), []).append(entry)
            dangling = [
                key
                for key, entries in rows.items()
                if any(
                    entry.key_hash not in self.blobs
                    or entry.value_hash not in self.blobs
                    for entry in entries
                )
            ]
            deletes = []
            for key in dangling:
                deletes.extend(entry.key for entry in rows.pop(key))
            refs: Counter = Counter(
                digest
                for entries in rows.values()
                for entry in entries
                for digest in entry.hashes
            )
            puts = {
                _refs_key(digest): str(count).encode()
                for digest, count in refs.items()
            }
            deletes.extend(
                key
                for key, _ in self.metadata.scan_prefix(REFS_PREFIX)
                if key not in puts
            )
            live = Counter(table for table, _ in rows)
            next_ids = {}
            for table, row_id in rows:
                next_ids[table] = max(next_ids.get(table, 0), row_id + 1)
            for schema in self.catalog().values():
                next_id = max(
                    schema.next_row_id, next_ids.get(schema.name, 0)
                )
                puts.update(
                    self._catalog_value(
                        schema.with_counts(live[schema.name], next_id)
                    )
                )
            self.metadata.write_batch(puts, deletes)
            orphans = [
                digest for digest in self.blobs.hashes() if digest not in refs
            ]
            for digest in orphans:
                self.blobs.delete_blob(digest)
        if orphans:
            logger.warning("Deleted %d unreferenced blobs", len(orphans))
        if dangling:
            logger.warning(
                "Dropped %d rows whose blobs did not survive", len(dangling)
            )
        return len(dangling)

    def stats(self) -> dict:
        """Blob, cache and table counters."""
        data = self.blobs.stats()
        data["tables"] = {
            name: schema.row_count for name, schema in self.catalog().items()
        }
        return data

    def close(self) -> None:  # noqa: D102
        self.blobs.close()
        self.metadata.close()

    def __enter__(self) -> HybridStore:
        return self

    def __exit__(self, *exc) -> None:
        self.close()
