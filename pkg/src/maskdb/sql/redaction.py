"""Literal redaction for leakage transcripts."""
from __future__ import annotations

from typing import Optional

from maskdb.sql.ast import Binary
from maskdb.sql.ast import Comparison
from maskdb.sql.ast import Expr
from maskdb.sql.ast import Identifier
from maskdb.sql.ast import Number
from maskdb.sql.ast import Operand
from maskdb.sql.ast import Redacted
from maskdb.sql.ast import SelectStatement


def _redact_operand(operand: Operand) -> Operand:
    if isinstance(operand, (Identifier, Redacted)):
        return operand
    kind = "Number" if isinstance(operand, Number) else "EncryptedLiteral"
    return Redacted(kind)


def _redact_expr(node: Optional[Expr]) -> Optional[Expr]:
    if node is None:
        return None
    if isinstance(node, Binary):
        return Binary(
            node.operator, _redact_expr(node.left), _redact_expr(node.right)
        )
    return Comparison(
        node.operator,
        _redact_operand(node.left),
        _redact_operand(node.right),
    )


def redact(statement: SelectStatement) -> SelectStatement:
    """Replace every literal value with the placeholder.

    Structure, identifiers, table name and operators are kept. The
    operation is idempotent.

    Args:
        statement: plain or encrypted query.

    Returns:
        The redacted query.

    """
    return SelectStatement(
        statement.columns, statement.table, _redact_expr(statement.where)
    )
