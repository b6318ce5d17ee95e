"""What the server learns from a query, and a query rebuilt from it.

A leakage transcript holds the redacted syntax tree, the token and the
row count of the scanned table; nothing else. :func:`simulate_query`
turns a transcript back into a well-formed encrypted query whose
literals all encrypt zero.

"""
from __future__ import annotations

import json
from dataclasses import dataclass
from dataclasses import replace
from typing import Any
from typing import Dict
from typing import Optional

from maskdb.auth.tokens import DelegationToken
from maskdb.crypto.base import Backend
from maskdb.crypto.types import KeyMaterial
from maskdb.sql.ast import Identifier
from maskdb.sql.ast import SelectStatement
from maskdb.sql.ast import statement_from_dict
from maskdb.sql.ast import walk
from maskdb.sql.compiler import map_literals
from maskdb.sql.redaction import redact
from maskdb.types import ColumnDef
from maskdb.types import TableSchema


def _canonical(data: Dict[str, Any]) -> bytes:
    text = json.dumps(data, separators=(",", ":"), ensure_ascii=False)
    return text.encode("utf-8")


def _reusable_part(token: DelegationToken) -> DelegationToken:
    parent = None if token.parent is None else _reusable_part(token.parent)
    return replace(token, nonce=b"", signature=b"", parent=parent)


@dataclass(frozen=True)
class LeakageTranscript:
    """``(redacted AST, token, row count)`` of one processed query."""

    redacted_ast: SelectStatement
    token: DelegationToken
    row_count: int

    def to_dict(self) -> Dict[str, Any]:  # noqa: D102
        return {
            "redacted_ast": self.redacted_ast.to_dict(),
            "token": self.token.to_b64(),
            "row_count": self.row_count,
        }

    def to_json(self) -> bytes:
        """Canonical bytes; equal transcripts give equal bytes."""
        return _canonical(self.to_dict())

    def comparable(self) -> bytes:
        """Canonical bytes with the token's single-use fields cleared.

        Every link of the token chain keeps its owner, user, grants,
        expiry and holder key but loses its nonce and signature, which
        differ on each request. Two queries equal up to their literals,
        sent with tokens of the same grants and expiry, give equal bytes.

        """
        data = self.to_dict()
        data["token"] = _reusable_part(self.token).to_b64()
        return _canonical(data)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> LeakageTranscript:
        """Rebuild a transcript fetched from a stream.

        Args:
            data: output of :meth:`to_dict`.

        Returns:
            The transcript.

        """
        return cls(
            redacted_ast=statement_from_dict(data["redacted_ast"]),
            token=DelegationToken.from_b64(data["token"]),
            row_count=int(data["row_count"]),
        )


def make_transcript(
    statement: SelectStatement, token: DelegationToken, row_count: int
) -> LeakageTranscript:
    """Build the transcript of a query.

    Args:
        statement: the query as received.
        token: the token it was authorized with.
        row_count: rows in the scanned table.

    Returns:
        The transcript, literals redacted.

    """
    return LeakageTranscript(redact(statement), token, row_count)


def _placeholder_schema(statement: SelectStatement) -> TableSchema:
    names = [
        node.name
        for node in walk(statement.where)
        if isinstance(node, Identifier)
    ]
    names += [name for name in statement.columns if name != "*"]
    unique = list(dict.fromkeys(names)) or ["_"]
    return TableSchema(
        statement.table, tuple(ColumnDef(name) for name in unique)
    )


def simulate_query(
    transcript: LeakageTranscript,
    backend: Backend,
    key: KeyMaterial,
    schema: Optional[TableSchema] = None,
) -> SelectStatement:
    """Build an encrypted query from a transcript alone.

    Every redacted literal becomes an encryption of 0 at the width of
    the column it is compared with.

    Args:
        transcript: leakage of a real query.
        backend: backend used to encrypt.
        key: any key of that backend.
        schema: catalog entry of the table; columns default to u32.

    Returns:
        A query with the same skeleton and serialized length as the
        real one.

    """
    statement = transcript.redacted_ast
    if statement.where is None:
        return statement
    schema = schema or _placeholder_schema(statement)
    where = map_literals(
        statement.where,
        schema,
        lambda _, width: backend.encrypt(key, 0, width),
    )
    return SelectStatement(statement.columns, statement.table, where)
