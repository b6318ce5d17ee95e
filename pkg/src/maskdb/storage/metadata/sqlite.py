"""Metadata store on an sqlite ``WITHOUT ROWID`` table."""
from __future__ import annotations

import logging
import sqlite3
import threading
from pathlib import Path
from typing import Iterable
from typing import Iterator
from typing import Mapping
from typing import Optional
from typing import Tuple

from maskdb.storage.metadata.base import Backend as Base

logger = logging.getLogger(__name__)

_SCHEMA = (
    "CREATE TABLE IF NOT EXISTS kv"
    " (key TEXT PRIMARY KEY, value BLOB NOT NULL) WITHOUT ROWID"
)


class Backend(Base):
    """One shared connection, serialized by a lock.

    The uri path is the database file, eg ``sqlite:///var/maskdb/meta.db``.

    """

    _connection: Optional[sqlite3.Connection] = None

    @property
    def connection(self) -> sqlite3.Connection:
        """Sqlite connection lazy-loader.

        Returns:
            The open connection.

        """
        if self._connection is None:
            self.connect()
        return self._connection  # type: ignore

    def connect(self) -> None:  # noqa: D102
        self._lock = getattr(self, "_lock", None) or threading.Lock()
        Path(self.path).parent.mkdir(parents=True, exist_ok=True)
        self._connection = sqlite3.connect(
            self.path, check_same_thread=False, isolation_level=None
        )
        self._connection.execute("PRAGMA journal_mode=WAL")
        self._connection.execute("PRAGMA synchronous=NORMAL")
        self._connection.execute(_SCHEMA)
        logger.debug("Opened metadata database %s", self.path)

    def get(self, key: str) -> Optional[bytes]:  # noqa: D102
        with self._lock:
            row = self.connection.execute(
                "SELECT value FROM kv WHERE key = ?", (key,)
            ).fetchone()
        return None if row is None else bytes(row[0])

    def write_batch(  # noqa: D102
        self, puts: Mapping[str, bytes], deletes: Iterable[str] = ()
    ) -> None:
        with self._lock:
            connection = self.connection
            connection.execute("BEGIN IMMEDIATE")
            try:
                connection.executemany(
                    "DELETE FROM kv WHERE key = ?",
                    [(key,) for key in deletes],
                )
                connection.executemany(
                    "INSERT OR REPLACE INTO kv (key, value) VALUES (?, ?)",
                    [(key, bytes(value)) for key, value in puts.items()],
                )
            except BaseException:
                connection.execute("ROLLBACK")
                raise
            connection.execute("COMMIT")

    def scan_prefix(  # noqa: D102
        self, prefix: str
    ) -> Iterator[Tuple[str, bytes]]:
        # \uffff sorts after every key character used by the layout
        with self._lock:
            rows = self.connection.execute(
                "SELECT key, value FROM kv"
                " WHERE key >= ? AND key < ? ORDER BY key",
                (prefix, prefix + "\uffff"),
            ).fetchall()
        return ((key, bytes(value)) for key, value in rows)

    def close(self) -> None:  # noqa: D102
        with self._lock:
            if self._connection is not None:
                self._connection.close()
                self._connection = None
