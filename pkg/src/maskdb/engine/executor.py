"""Oblivious query execution.

Every query verifies its token, then scans the whole table: the WHERE
tree is evaluated on each row into an encrypted mask bit, and each
selected cell is multiplexed against an encryption of zero. The number
and kind of homomorphic operations depend only on the row count, the
tree shape and the selected columns.

"""
from __future__ import annotations

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from dataclasses import field
from typing import Any
from typing import Dict
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple
from typing import Union

from maskdb.auth.keyring import Keyring
from maskdb.auth.tokens import DelegationToken
from maskdb.auth.tokens import Permission
from maskdb.config import Settings
from maskdb.crypto.base import Backend
from maskdb.crypto.latency import LatencyTable
from maskdb.crypto.types import CipherBool
from maskdb.crypto.types import Ciphertext
from maskdb.crypto.types import KeyMaterial
from maskdb.engine.transcript import LeakageTranscript
from maskdb.engine.transcript import make_transcript
from maskdb.event_stream.base import Backend as TranscriptStream
from maskdb.exceptions import AstFormatError
from maskdb.exceptions import PermissionDeniedError
from maskdb.exceptions import ResultFormatError
from maskdb.exceptions import SchemaMismatchError
from maskdb.exceptions import UnknownTranscriptError
from maskdb.exceptions import WidthMismatchError
from maskdb.sql.ast import Binary
from maskdb.sql.ast import Comparison
from maskdb.sql.ast import EncryptedLiteral
from maskdb.sql.ast import Expr
from maskdb.sql.ast import Identifier
from maskdb.sql.ast import Node
from maskdb.sql.ast import SelectStatement
from maskdb.sql.serialization import deserialize_ast
from maskdb.storage.hybrid import HybridStore
from maskdb.types import ColumnDef
from maskdb.types import EncryptedRow
from maskdb.types import TableSchema

logger = logging.getLogger(__name__)

BooleanMask = Tuple[CipherBool, ...]


@dataclass(frozen=True)
class EncryptedResult:
    """Masked rows over the selected columns.

    ``scanned`` is the number of table rows processed. It equals
    ``row_count`` except for aggregated lookups, which fold every row
    into one.

    """

    columns: Tuple[str, ...]
    rows: Tuple[Tuple[Ciphertext, ...], ...] = field(repr=False)
    mask: Optional[BooleanMask] = field(default=None, repr=False)
    scanned: int = 0
    transcript_id: Optional[str] = None

    def __post_init__(self) -> None:
        if self.mask is not None and len(self.mask) != len(self.rows):
            raise ResultFormatError(
                f"{len(self.rows)} rows but {len(self.mask)} mask bits"
            )
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ResultFormatError(
                    f"Row of {len(row)} cells for {len(self.columns)} columns"
                )

    @property
    def row_count(self) -> int:  # noqa: D102
        return len(self.rows)


def _check_tree(node: Expr, schema: TableSchema) -> None:
    if isinstance(node, Binary):
        _check_tree(node.left, schema)
        _check_tree(node.right, schema)
        return
    widths = set()
    for operand in (node.left, node.right):
        if isinstance(operand, Identifier):
            widths.add(schema.column(operand.name).width)
        elif isinstance(operand, EncryptedLiteral):
            widths.add(operand.ciphertext.width)
        else:
            raise AstFormatError(
                "Query literals must be encrypted before submission"
            )
    if len(widths) != 1:
        raise WidthMismatchError(
            f"Comparison mixes widths {sorted(widths)}"
        )


class QueryEngine:
    """Server side of the protocol over one store and one backend."""

    def __init__(
        self,
        store: HybridStore,
        backend: Backend,
        keyring: Keyring,
        transcripts: Optional[TranscriptStream] = None,
        return_mask: bool = True,
        workers: int = 4,
    ) -> None:
        """Wire the engine.

        Args:
            store: table storage.
            backend: homomorphic evaluator; owner keys are registered
                with it.
            keyring: owners and their verification keys.
            transcripts: where leakage transcripts are posted.
            return_mask: include the encrypted mask in results.
            workers: threads evaluating rows of one query.

        """
        self.store = store
        self.backend = backend
        self.keyring = keyring
        self.transcripts = transcripts
        self.return_mask = return_mask
        self.workers = workers
        self._last: Optional[LeakageTranscript] = None
        self._last_lock = threading.Lock()
        for record in keyring:
            if record.key_material is not None:
                backend.register_key(record.key_material)

    @classmethod
    def from_settings(
        cls,
        settings: Settings,
        store: Optional[HybridStore] = None,
        backend: Optional[Backend] = None,
        keyring: Optional[Keyring] = None,
    ) -> QueryEngine:
        """Build an engine from configuration.

        Args:
            settings: server configuration.
            store: overrides the configured store.
            backend: overrides the configured backend.
            keyring: overrides the keyring under ``keys_dir``.

        Returns:
            The engine.

        """
        table = (
            LatencyTable.from_file(settings.latency_table)
            if settings.latency_table
            else None
        )
        return cls(
            store=store or HybridStore.from_settings(settings),
            backend=backend
            or Backend.from_name(
                settings.backend, latency_table=table, seed=settings.seed
            ),
            keyring=keyring or Keyring(settings.keys_dir / "owners.json"),
            transcripts=TranscriptStream.from_uri(settings.transcript_uri),
            return_mask=settings.return_mask,
            workers=settings.workers,
        )

    # ------------------------------------------------------------------
    # authorization

    def _authorize(self, token: DelegationToken, needed: Permission) -> None:
        self.keyring.authorize(token, needed)

    def _authorize_owner(
        self, token: DelegationToken, schema: TableSchema
    ) -> None:
        if schema.owner_id != token.owner_id:
            raise PermissionDeniedError(
                f"Table '{schema.name}' belongs to another owner"
            )

    def register_owner(
        self,
        verification_key: bytes,
        key_material: Optional[KeyMaterial] = None,
        proof: Optional[bytes] = None,
    ) -> str:
        """Register an owner and its public homomorphic keys.

        Args:
            verification_key: raw Ed25519 public key.
            key_material: public key material for evaluation.
            proof: registration signature.

        Returns:
            The owner id.

        """
        record = self.keyring.register(verification_key, key_material, proof)
        if record.key_material is not None:
            self.backend.register_key(record.key_material)
        return record.owner_id

    # ------------------------------------------------------------------
    # evaluation

    def evaluate_homomorphic_tree(
        self, node: Node, row: EncryptedRow, schema: TableSchema
    ) -> Union[CipherBool, Ciphertext]:
        """Evaluate a tree on one row, left subtree first.

        Args:
            node: homomorphic expression tree (or a leaf).
            row: the row identifiers resolve against.
            schema: catalog entry giving column positions.

        Returns:
            The encrypted value of the node.

        Raises:
            UnknownColumnError: identifier not in the table.
            AstFormatError: a plaintext literal reached the server.

        """
        if isinstance(node, Identifier):
            return row[schema.index(node.name)]
        if isinstance(node, EncryptedLiteral):
            return node.ciphertext
        if isinstance(node, Binary):
            left = self.evaluate_homomorphic_tree(node.left, row, schema)
            right = self.evaluate_homomorphic_tree(node.right, row, schema)
            if node.operator == "AND":
                return self.backend.he_and(left, right)
            return self.backend.he_or(left, right)
        if isinstance(node, Comparison):
            left = self.evaluate_homomorphic_tree(node.left, row, schema)
            right = self.evaluate_homomorphic_tree(node.right, row, schema)
            if node.operator == "=":
                return self.backend.he_eq(left, right)
            if node.operator == "<":
                return self.backend.he_lt(left, right)
            if node.operator == "<=":
                return self.backend.he_le(left, right)
            if node.operator == ">":
                return self.backend.he_lt(right, left)
            return self.backend.he_le(right, left)
        raise AstFormatError(f"Cannot evaluate {type(node).__name__} node")

    def build_mask(
        self,
        where: Optional[Expr],
        rows: Sequence[EncryptedRow],
        schema: TableSchema,
    ) -> BooleanMask:
        """Evaluate the WHERE tree once per row.

        Args:
            where: homomorphic tree; ``None`` selects every row.
            rows: the table, in row id order.
            schema: its catalog entry.

        Returns:
            One encrypted bit per row, in row order.

        """
        if where is None:
            return tuple(self.backend.trivial_encrypt(1, 1) for _ in rows)

        def evaluate(row: EncryptedRow) -> CipherBool:
            bit = self.evaluate_homomorphic_tree(where, row, schema)
            if not bit.is_bool:
                raise WidthMismatchError("WHERE does not evaluate to a bool")
            return bit

        if self.workers <= 1 or len(rows) < 2:
            return tuple(map(evaluate, rows))
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            return tuple(pool.map(evaluate, rows))

    def zeros(self, widths: Sequence[int]) -> Dict[int, Ciphertext]:
        """One trivial encryption of zero per distinct width.

        Args:
            widths: widths of the selected columns.

        Returns:
            width -> trivial zero.

        """
        return {
            width: self.backend.trivial_encrypt(0, width)
            for width in sorted(set(widths))
        }

    def apply_mask(
        self,
        rows: Sequence[EncryptedRow],
        mask: BooleanMask,
        columns: Sequence[ColumnDef],
        schema: TableSchema,
    ) -> Tuple[Tuple[Ciphertext, ...], ...]:
        """Keep selected cells where the mask is 1, zero elsewhere.

        Args:
            rows: the table.
            mask: one bit per row.
            columns: selected columns, in output order.
            schema: catalog entry giving column positions.

        Returns:
            ``len(rows)`` masked rows of ``len(columns)`` cells.

        Raises:
            ResultFormatError: mask and rows differ in length.

        """
        if len(mask) != len(rows):
            raise ResultFormatError(
                f"{len(rows)} rows but {len(mask)} mask bits"
            )
        zero = self.zeros([column.width for column in columns])
        positions = [schema.index(column.name) for column in columns]
        return tuple(
            tuple(
                self.backend.he_cmux(bit, row[position], zero[column.width])
                for position, column in zip(positions, columns)
            )
            for row, bit in zip(rows, mask)
        )

    # ------------------------------------------------------------------
    # queries

    def process_query(
        self,
        query: Union[bytes, str, SelectStatement],
        token: DelegationToken,
    ) -> EncryptedResult:
        """Run an encrypted SELECT.

        Args:
            query: serialized encrypted AST, or the parsed statement.
            token: a token granting Read on the table's owner.

        Returns:
            One masked row per table row.

        Raises:
            AuthorizationError: before any data is read.
            UnknownTableError: no such table.
            SchemaMismatchError: columns or widths do not match.

        """
        self._authorize(token, Permission.READ)
        statement = (
            query
            if isinstance(query, SelectStatement)
            else deserialize_ast(query)
        )
        return self._run(statement, token)

    def _run(
        self, statement: SelectStatement, token: DelegationToken
    ) -> EncryptedResult:
        schema = self.store.schema(statement.table)
        self._authorize_owner(token, schema)
        columns = [
            schema.column(name) for name in schema.select(statement.columns)
        ]
        if statement.where is not None:
            _check_tree(statement.where, schema)
        rows = tuple(self.store.rows(schema.name))
        mask = self.build_mask(statement.where, rows, schema)
        masked = self.apply_mask(rows, mask, columns, schema)
        transcript_id = self._record(
            make_transcript(statement, token, len(rows))
        )
        logger.info(
            "Scanned %d rows of '%s' for %d columns",
            len(rows),
            schema.name,
            len(columns),
        )
        return EncryptedResult(
            columns=tuple(column.name for column in columns),
            rows=masked,
            mask=mask if self.return_mask else None,
            scanned=len(rows),
            transcript_id=transcript_id,
        )

    def pir_lookup(
        self,
        enc_key: Ciphertext,
        table: str,
        token: DelegationToken,
        aggregate: bool = False,
    ) -> EncryptedResult:
        """Private lookup of a key in a (key, value) table.

        The lookup is the query ``SELECT key, value FROM table WHERE
        key = enc_key`` over the first two columns.

        Args:
            enc_key: encrypted key, same width as the key column.
            table: table name.
            token: a token granting Read.
            aggregate: fold the masked pairs into one with additions;
                only meaningful when keys are unique.

        Returns:
            n masked pairs, or a single pair when aggregating.

        Raises:
            SchemaMismatchError: the table has fewer than two columns.

        """
        self._authorize(token, Permission.READ)
        schema = self.store.schema(table)
        if len(schema.columns) < 2:
            raise SchemaMismatchError(
                f"Table '{table}' needs a key and a value column"
            )
        key, value = schema.columns[:2]
        statement = SelectStatement(
            columns=(key.name, value.name),
            table=table,
            where=Comparison(
                "=", Identifier(key.name), EncryptedLiteral(enc_key)
            ),
        )
        result = self._run(statement, token)
        if not aggregate:
            return result
        if result.rows:
            acc = result.rows[0]
            for row in result.rows[1:]:
                acc = tuple(
                    self.backend.he_add(left, right)
                    for left, right in zip(acc, row)
                )
        else:
            zero = self.zeros([key.width, value.width])
            acc = (zero[key.width], zero[value.width])
        return EncryptedResult(
            columns=result.columns,
            rows=(acc,),
            scanned=result.scanned,
            transcript_id=result.transcript_id,
        )

    # ------------------------------------------------------------------
    # writes

    def insert(
        self,
        table: str,
        columns: Sequence[ColumnDef],
        rows: Sequence[Sequence[Ciphertext]],
        token: DelegationToken,
    ) -> List[int]:
        """Store encrypted rows, creating the table on first insert.

        Args:
            table: table name.
            columns: column definitions, checked against the catalog.
            rows: ciphertext rows in column order.
            token: a token granting Write.

        Returns:
            The new row ids.

        """
        self._authorize(token, Permission.WRITE)
        schema = self.store.ensure_table(table, columns, token.owner_id)
        self._authorize_owner(token, schema)
        row_ids = [
            self.store.insert_row(table, cells, token.owner_id)
            for cells in rows
        ]
        logger.info("Inserted %d rows into '%s'", len(row_ids), table)
        return row_ids

    def delete_row(
        self, table: str, row_id: int, token: DelegationToken
    ) -> None:
        """Remove one row.

        Args:
            table: table name.
            row_id: row to remove.
            token: a token granting Delete.

        """
        self._authorize(token, Permission.DELETE)
        self._authorize_owner(token, self.store.schema(table))
        self.store.delete_row(table, row_id)

    def catalog(self, token: DelegationToken) -> Dict[str, TableSchema]:
        """Tables owned by the token's owner.

        Args:
            token: a token granting Read.

        Returns:
            name -> schema.

        """
        self._authorize(token, Permission.READ)
        return {
            name: schema
            for name, schema in self.store.catalog().items()
            if schema.owner_id == token.owner_id
        }

    def compact(self, token: DelegationToken) -> int:
        """Reclaim dead blob space.

        Args:
            token: a token granting Write.

        Returns:
            Bytes reclaimed.

        """
        self._authorize(token, Permission.WRITE)
        return self.store.compact()

    # ------------------------------------------------------------------
    # transcripts

    def _record(self, transcript: LeakageTranscript) -> Optional[str]:
        with self._last_lock:
            self._last = transcript
        if self.transcripts is None:
            return None
        return self.transcripts.post(transcript.to_dict())

    def audit_transcript(self) -> LeakageTranscript:
        """Transcript of the last processed query.

        Returns:
            The transcript.

        Raises:
            UnknownTranscriptError: no query was processed yet.

        """
        with self._last_lock:
            if self._last is None:
                raise UnknownTranscriptError("No query was processed yet")
            return self._last

    def transcript(
        self, transcript_id: str, token: DelegationToken
    ) -> LeakageTranscript:
        """Fetch a posted transcript for an audit.

        Args:
            transcript_id: id returned with a result.
            token: a token granting Read, from the same owner as the
                audited query.

        Returns:
            The transcript.

        Raises:
            UnknownTranscriptError: no stream, or no such transcript.
            PermissionDeniedError: the query was another owner's.

        """
        self._authorize(token, Permission.READ)
        if self.transcripts is None:
            raise UnknownTranscriptError("No transcript stream configured")
        transcript = LeakageTranscript.from_dict(
            self.transcripts.get(transcript_id)
        )
        if transcript.token.owner_id != token.owner_id:
            raise PermissionDeniedError(
                "Transcript belongs to another owner"
            )
        return transcript

    # ------------------------------------------------------------------
    # admin

    def stats(self, token: DelegationToken) -> Dict[str, Any]:
        """Operation counters and storage figures.

        Args:
            token: a token granting Read.

        Returns:
            JSON-friendly snapshot.

        """
        self._authorize(token, Permission.READ)
        snapshot = self.backend.stats()
        return {
            "backend": self.backend.name,
            "ops": snapshot.as_dict(),
            "simulated_latency_ms": snapshot.simulated_latency_ms,
            "storage": self.store.stats(),
        }

    def close(self) -> None:
        """Release the store and the transcript stream."""
        self.store.close()
        if self.transcripts is not None:
            self.transcripts.close()
