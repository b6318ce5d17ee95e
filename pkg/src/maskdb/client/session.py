"""Client half of the protocol.

A session encrypts query literals, attaches a token, sends the query,
decrypts the masked result set and drops the rows which did not match.
Tokens are single-use (the server remembers every nonce), so a session
draws a fresh one per request from its token source.

"""
from __future__ import annotations

import base64
import logging
import time
from dataclasses import dataclass
from typing import Any
from typing import Callable
from typing import Dict
from typing import Iterable
from typing import Iterator
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple
from typing import Union

from maskdb.auth.keyring import sign_registration
from maskdb.auth.tokens import create_token
from maskdb.auth.tokens import delegate
from maskdb.auth.tokens import DelegationToken
from maskdb.auth.tokens import OwnerKeypair
from maskdb.auth.tokens import Permission
from maskdb.cli.wire import Attachments
from maskdb.cli.wire import Request
from maskdb.cli.wire import Response
from maskdb.cli.wire import result_from_response
from maskdb.client.transport import Transport
from maskdb.crypto.base import Backend
from maskdb.crypto.types import KeyMaterial
from maskdb.engine.executor import EncryptedResult
from maskdb.engine.transcript import LeakageTranscript
from maskdb.exceptions import MaskdbError
from maskdb.exceptions import ResultFormatError
from maskdb.exceptions import UnknownTableError
from maskdb.sql.ast import SelectStatement
from maskdb.sql.compiler import compile_to_het
from maskdb.sql.parser import parse_sql
from maskdb.sql.serialization import serialize_ast
from maskdb.types import ColumnDef
from maskdb.types import TableSchema

logger = logging.getLogger(__name__)

PlainRow = Tuple[int, ...]
TokenSource = Union[DelegationToken, Callable[[], DelegationToken]]

DEFAULT_TOKEN_TTL = 300


def owner_tokens(
    keypair: OwnerKeypair,
    permissions: Iterable[Permission] = tuple(Permission),
    ttl: int = DEFAULT_TOKEN_TTL,
) -> Callable[[], DelegationToken]:
    """Mint a fresh root token per request.

    Args:
        keypair: the owner's signing key.
        permissions: rights granted by each token.
        ttl: seconds each token stays valid.

    Returns:
        Token factory.

    """
    granted = frozenset(permissions)

    def mint() -> DelegationToken:
        return create_token(
            keypair,
            keypair.owner_id,
            granted,
            int(time.time()) + ttl,
            holder_key=keypair.verification_key,
        )

    return mint


def delegated_tokens(
    parent: DelegationToken,
    keypair: OwnerKeypair,
    permissions: Optional[Iterable[Permission]] = None,
    ttl: Optional[int] = None,
) -> Callable[[], DelegationToken]:
    """Mint a fresh child of a delegable token per request.

    Args:
        parent: token granting Delegate, held by `keypair`.
        keypair: the holder's signing key.
        permissions: rights of each child; defaults to the parent's
            minus Delegate.
        ttl: seconds each child stays valid, capped by the parent.

    Returns:
        Token factory.

    """
    granted = frozenset(
        parent.permissions - {Permission.DELEGATE}
        if permissions is None
        else permissions
    )

    def mint() -> DelegationToken:
        expires_at = parent.expires_at
        if ttl is not None:
            expires_at = min(expires_at, int(time.time()) + ttl)
        return delegate(
            parent,
            keypair,
            keypair.owner_id,
            granted,
            expires_at=expires_at,
        )

    return mint


@dataclass(frozen=True)
class PlainResultSet:
    """Decrypted rows that matched the query."""

    columns: Tuple[str, ...]
    rows: Tuple[PlainRow, ...]

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[PlainRow]:
        return iter(self.rows)

    def as_dicts(self) -> List[Dict[str, int]]:  # noqa: D102
        return [dict(zip(self.columns, row)) for row in self.rows]


def filter_rows(
    rows: Sequence[PlainRow], mask: Optional[Sequence[int]] = None
) -> List[PlainRow]:
    """Drop the rows which did not match.

    With a mask, rows whose bit is 1 are kept. Without one, all-zero
    rows are taken as non-matching, so a matching row whose selected
    values are all 0 is lost.

    Args:
        rows: decrypted rows.
        mask: decrypted mask bits, one per row.

    Returns:
        The matching rows, in order.

    Raises:
        ResultFormatError: mask and rows differ in length.

    """
    if mask is None:
        return [tuple(row) for row in rows if any(row)]
    if len(mask) != len(rows):
        raise ResultFormatError(
            f"{len(rows)} rows but {len(mask)} mask bits"
        )
    return [tuple(row) for row, bit in zip(rows, mask) if bit]


class ClientSession:
    """Key holder talking to one server."""

    def __init__(
        self,
        backend: Backend,
        key: KeyMaterial,
        transport: Transport,
        tokens: TokenSource,
        keypair: Optional[OwnerKeypair] = None,
    ) -> None:
        """Bind keys, transport and token source.

        Args:
            backend: backend used to encrypt and decrypt.
            key: key material with the secret key.
            transport: how requests reach the server.
            tokens: a token (usable once) or a factory of tokens.
            keypair: the owner's signing key, needed to register.

        """
        self.backend = backend
        self.key = key
        self.transport = transport
        self.tokens = tokens
        self.keypair = keypair
        self._schemas: Dict[str, TableSchema] = {}

    @classmethod
    def for_owner(
        cls,
        backend: Backend,
        key: KeyMaterial,
        transport: Transport,
        keypair: OwnerKeypair,
        ttl: int = DEFAULT_TOKEN_TTL,
    ) -> ClientSession:
        """Session acting as the data owner, with every permission.

        Args:
            backend: backend used to encrypt and decrypt.
            key: the owner's key material.
            transport: how requests reach the server.
            keypair: the owner's signing key.
            ttl: seconds each minted token stays valid.

        Returns:
            The session.

        """
        return cls(
            backend,
            key,
            transport,
            owner_tokens(keypair, ttl=ttl),
            keypair=keypair,
        )

    def token(self) -> DelegationToken:
        """Token for the next request."""
        if callable(self.tokens):
            return self.tokens()
        return self.tokens

    def _call(
        self,
        kind: str,
        body: Dict[str, Any],
        attachments: Optional[Attachments] = None,
    ) -> Response:
        request = Request(
            kind=kind,
            body=body,
            token=self.token().to_b64(),
            attachments=[] if attachments is None else attachments.blobs,
        )
        return self.transport.call(request)

    # ------------------------------------------------------------------
    # owner actions

    def register(self) -> str:
        """Register the owner's verification key and public FHE keys.

        Returns:
            The owner id assigned by the server.

        Raises:
            ValueError: the session has no signing key.

        """
        if self.keypair is None:
            raise ValueError("Registering requires the owner's keypair")
        public = self.key.public()
        proof = sign_registration(self.keypair, public)
        body = {
            "action": "register",
            "verification_key": base64.b64encode(
                self.keypair.verification_key
            ).decode("ascii"),
            "key_material": public.to_dict(),
            "proof": base64.b64encode(proof).decode("ascii"),
        }
        response = self.transport.call(Request(kind="admin", body=body))
        return response.body["owner_id"]

    def insert(
        self,
        table: str,
        columns: Sequence[ColumnDef],
        rows: Iterable[Sequence[int]],
    ) -> List[int]:
        """Encrypt and store rows.

        Args:
            table: table name, created on first insert.
            columns: column definitions.
            rows: plaintext rows in column order.

        Returns:
            Row ids assigned by the server.

        """
        attachments = Attachments()
        body_rows = []
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(
                    f"Row has {len(row)} values for {len(columns)} columns"
                )
            body_rows.append(
                attachments.add_all(
                    [
                        self.backend.encrypt(self.key, value, column.width)
                        for value, column in zip(row, columns)
                    ]
                )
            )
        body = {
            "table": table,
            "columns": [
                {"name": column.name, "width": column.width}
                for column in columns
            ],
            "rows": body_rows,
        }
        response = self._call("insert", body, attachments)
        self._schemas.pop(table, None)
        return list(response.body["row_ids"])

    # ------------------------------------------------------------------
    # queries

    def catalog(self) -> Dict[str, TableSchema]:
        """Tables of the token's owner.

        Returns:
            name -> schema.

        """
        response = self._call("admin", {"action": "catalog"})
        tables = {
            name: TableSchema.from_dict(data)
            for name, data in response.body["tables"].items()
        }
        self._schemas.update(tables)
        return tables

    def schema(self, table: str) -> TableSchema:
        """Catalog entry of a table, fetched once per session.

        Args:
            table: table name.

        Returns:
            The schema.

        Raises:
            UnknownTableError: the server has no such table.

        """
        if table not in self._schemas:
            self.catalog()
        if table not in self._schemas:
            raise UnknownTableError(f"No table '{table}' on the server")
        return self._schemas[table]

    def encrypt_query(
        self, sql: str, schema: Optional[TableSchema] = None
    ) -> SelectStatement:
        """Parse a query and encrypt its literals.

        Args:
            sql: query text.
            schema: catalog entry of the queried table; fetched when
                omitted.

        Returns:
            The encrypted statement, ready for :func:`serialize_ast`.

        """
        statement = parse_sql(sql)
        schema = schema or self.schema(statement.table)
        return compile_to_het(statement, self.backend, self.key, schema)

    def submit(self, statement: SelectStatement) -> EncryptedResult:
        """Send an encrypted statement.

        Args:
            statement: output of :meth:`encrypt_query`.

        Returns:
            The masked result set.

        """
        response = self._call(
            "query", {"query": serialize_ast(statement).decode("utf-8")}
        )
        return result_from_response(response)

    def decrypt_result(
        self, result: EncryptedResult
    ) -> Tuple[List[PlainRow], Optional[List[int]]]:
        """Decrypt every cell and mask bit.

        Args:
            result: masked result set.

        Returns:
            Rows and mask bits (``None`` when the server sent no mask).

        Raises:
            MaskdbError: any cell fails to decrypt; nothing is returned.

        """
        try:
            rows = [
                tuple(int(self.backend.decrypt(self.key, ct)) for ct in row)
                for row in result.rows
            ]
            mask = (
                None
                if result.mask is None
                else [
                    int(self.backend.decrypt(self.key, bit))
                    for bit in result.mask
                ]
            )
        except MaskdbError:
            logger.warning(
                "Discarding a result of %d rows after a decryption failure",
                result.row_count,
            )
            raise
        return rows, mask

    def execute(
        self, sql: str, schema: Optional[TableSchema] = None
    ) -> PlainResultSet:
        """Run a query end to end.

        Args:
            sql: query text.
            schema: catalog entry of the queried table; fetched when
                omitted.

        Returns:
            The matching plaintext rows.

        """
        result = self.submit(self.encrypt_query(sql, schema))
        rows, mask = self.decrypt_result(result)
        return PlainResultSet(result.columns, tuple(filter_rows(rows, mask)))

    def lookup(
        self,
        table: str,
        key: int,
        aggregate: bool = False,
        schema: Optional[TableSchema] = None,
    ) -> List[PlainRow]:
        """Private key-value lookup.

        Args:
            table: (key, value) table.
            key: plaintext key looked up.
            aggregate: let the server fold matches into one pair.
            schema: catalog entry of the table; fetched when omitted.

        Returns:
            Matching (key, value) pairs; with `aggregate`, the single
            folded pair, ``(0, 0)`` when nothing matched.

        """
        schema = schema or self.schema(table)
        attachments = Attachments()
        body = {
            "table": table,
            "key": attachments.add(
                self.backend.encrypt(
                    self.key, key, schema.columns[0].width
                )
            ),
            "aggregate": aggregate,
        }
        result = result_from_response(
            self._call("pir_lookup", body, attachments)
        )
        rows, mask = self.decrypt_result(result)
        if aggregate:
            return rows
        return filter_rows(rows, mask)

    # ------------------------------------------------------------------
    # admin

    def delete_row(self, table: str, row_id: int) -> None:  # noqa: D102
        body = {"action": "delete_row", "table": table, "row_id": row_id}
        self._call("admin", body)
        self._schemas.pop(table, None)

    def compact(self) -> int:
        """Ask the server to reclaim dead blob space.

        Returns:
            Bytes reclaimed.

        """
        response = self._call("admin", {"action": "compact"})
        return int(response.body["reclaimed"])

    def stats(self) -> dict:  # noqa: D102
        return self._call("admin", {"action": "stats"}).body

    def transcript(self, transcript_id: str) -> LeakageTranscript:
        """Fetch the leakage transcript of a query for an audit.

        Args:
            transcript_id: id carried by the result.

        Returns:
            The transcript.

        """
        response = self._call(
            "admin", {"action": "transcript", "id": transcript_id}
        )
        return LeakageTranscript.from_dict(response.body["transcript"])

    def close(self) -> None:  # noqa: D102
        self.transport.close()

    def __enter__(self) -> ClientSession:
        return self

    def __exit__(self, *exc) -> None:
        self.close()
