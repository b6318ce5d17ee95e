"""Canonical JSON wire form of queries, plus their SQL text form.

Envelope: ``{"version": 1, "ast": <statement>}``, compact separators,
keys in node declaration order, ciphertexts as base64 FHEC.

"""
from __future__ import annotations

import json
from typing import Union

from maskdb.exceptions import AstFormatError
from maskdb.sql.ast import Comparison
from maskdb.sql.ast import Expr
from maskdb.sql.ast import Identifier
from maskdb.sql.ast import Number
from maskdb.sql.ast import Operand
from maskdb.sql.ast import SelectStatement
from maskdb.sql.ast import statement_from_dict

AST_VERSION = 1


def to_canonical_json(statement: SelectStatement) -> str:
    """Dump a statement without the envelope.

    Args:
        statement: query to dump.

    Returns:
        Compact JSON text.

    """
    return json.dumps(
        statement.to_dict(), separators=(",", ":"), ensure_ascii=False
    )


def serialize_ast(statement: SelectStatement) -> bytes:
    """Encode a query for the wire.

    Args:
        statement: plain, encrypted or redacted query.

    Returns:
        UTF-8 JSON bytes.

    """
    envelope = {"version": AST_VERSION, "ast": statement.to_dict()}
    return json.dumps(
        envelope, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


def deserialize_ast(raw: Union[bytes, str]) -> SelectStatement:
    """Decode a query received over the wire.

    Args:
        raw: output of :func:`serialize_ast`.

    Returns:
        The statement.

    Raises:
        AstFormatError: malformed JSON, wrong version or bad shape.

    """
    try:
        envelope = json.loads(raw)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise AstFormatError(f"Malformed query JSON: {exc}") from exc
    if not isinstance(envelope, dict) or "ast" not in envelope:
        raise AstFormatError("Query envelope must hold 'version' and 'ast'")
    if envelope.get("version") != AST_VERSION:
        raise AstFormatError(
            f"Unsupported query version {envelope.get('version')!r}"
        )
    return statement_from_dict(envelope["ast"])


def _render_operand(operand: Operand) -> str:
    if isinstance(operand, Identifier):
        return operand.name
    if isinstance(operand, Number):
        return str(operand.value)
    raise ValueError(f"{type(operand).__name__} has no SQL text form")


def _render_expr(node: Expr, nested: bool = False) -> str:
    if isinstance(node, Comparison):
        left = _render_operand(node.left)
        return f"{left} {node.operator} {_render_operand(node.right)}"
    left = _render_expr(node.left, nested=True)
    text = f"{left} {node.operator} {_render_expr(node.right, nested=True)}"
    return f"({text})" if nested else text


def render_sql(statement: SelectStatement) -> str:
    """Print a plaintext statement as query text.

    Nested AND/OR nodes are parenthesized, so the text parses back to
    the same tree.

    Args:
        statement: parsed query; encrypted or redacted literals have no
            text form.

    Returns:
        The query text.

    Raises:
        ValueError: the statement holds a non-plaintext literal.

    """
    text = f"SELECT {', '.join(statement.columns)} FROM {statement.table}"
    if statement.where is None:
        return text
    return f"{text} WHERE {_render_expr(statement.where)}"
