"""Compile WHERE clauses into homomorphic expression trees.

Every plaintext literal is encrypted at the width of the column it is
compared with; operators stay in the clear. ``>`` and ``>=`` are
rewritten into ``<`` and ``<=`` with swapped operands, the only order
comparisons backends implement.

"""
from __future__ import annotations

import logging
from typing import Callable
from typing import Optional

from maskdb.crypto.base import Backend
from maskdb.crypto.types import Ciphertext
from maskdb.crypto.types import KeyMaterial
from maskdb.exceptions import OutOfRangeError
from maskdb.exceptions import UnknownTableError
from maskdb.exceptions import WidthMismatchError
from maskdb.sql.ast import Binary
from maskdb.sql.ast import Comparison
from maskdb.sql.ast import EncryptedLiteral
from maskdb.sql.ast import Expr
from maskdb.sql.ast import Identifier
from maskdb.sql.ast import Number
from maskdb.sql.ast import Operand
from maskdb.sql.ast import Redacted
from maskdb.sql.ast import SelectStatement
from maskdb.types import TableSchema

logger = logging.getLogger(__name__)

SWAPPED = {">": "<", ">=": "<="}

DEFAULT_LITERAL_WIDTH = 32
"""Width of literals compared against other literals."""

Encryptor = Callable[[int, int], Ciphertext]


def normalize(node: Comparison) -> Comparison:
    """Rewrite ``a > b`` as ``b < a`` and ``a >= b`` as ``b <= a``.

    Args:
        node: a comparison.

    Returns:
        An equivalent comparison using ``=``, ``<`` or ``<=``.

    """
    if node.operator in SWAPPED:
        return Comparison(SWAPPED[node.operator], node.right, node.left)
    return node


def operand_width(operand: Operand, schema: TableSchema) -> Optional[int]:
    """Width an operand imposes on its comparison.

    Args:
        operand: comparison side.
        schema: table the identifiers refer to.

    Returns:
        The column or ciphertext width, ``None`` for plain literals.

    """
    if isinstance(operand, Identifier):
        return schema.column(operand.name).width
    if isinstance(operand, EncryptedLiteral):
        return operand.ciphertext.width
    return None


def comparison_width(node: Comparison, schema: TableSchema) -> int:
    """Width both sides of a comparison are encrypted at.

    Args:
        node: comparison.
        schema: table the identifiers refer to.

    Returns:
        The shared width; literals compared with literals get the
        default width.

    Raises:
        WidthMismatchError: the two sides have different widths.

    """
    widths = {
        width
        for width in (
            operand_width(node.left, schema),
            operand_width(node.right, schema),
        )
        if width is not None
    }
    if len(widths) > 1:
        raise WidthMismatchError(
            f"Cannot compare u{min(widths)} with u{max(widths)}"
        )
    return widths.pop() if widths else DEFAULT_LITERAL_WIDTH


def _encrypt_operand(
    operand: Operand, width: int, encrypt: Encryptor
) -> Operand:
    if isinstance(operand, Number):
        try:
            return EncryptedLiteral(encrypt(operand.value, width))
        except OutOfRangeError as exc:
            raise WidthMismatchError(
                f"Literal does not fit the u{width} column it is compared with"
            ) from exc
    if isinstance(operand, Redacted):
        return EncryptedLiteral(encrypt(0, width))
    return operand


def map_literals(
    node: Expr, schema: TableSchema, encrypt: Encryptor
) -> Expr:
    """Encrypt every literal of a WHERE tree and normalize comparisons.

    Args:
        node: WHERE tree, possibly holding Number or Redacted leaves.
        schema: table the identifiers refer to.
        encrypt: called with (value, width) for each literal.

    Returns:
        A structurally isomorphic tree with only EncryptedLiteral
        leaves.

    """
    if isinstance(node, Binary):
        return Binary(
            node.operator,
            map_literals(node.left, schema, encrypt),
            map_literals(node.right, schema, encrypt),
        )
    width = comparison_width(node, schema)
    node = normalize(node)
    return Comparison(
        node.operator,
        _encrypt_operand(node.left, width, encrypt),
        _encrypt_operand(node.right, width, encrypt),
    )


def compile_to_het(
    statement: SelectStatement,
    backend: Backend,
    key: KeyMaterial,
    schema: TableSchema,
) -> SelectStatement:
    """Encrypt the literals of a parsed query.

    Args:
        statement: output of :func:`maskdb.sql.parser.parse_sql`.
        backend: homomorphic backend used to encrypt.
        key: client key material.
        schema: catalog entry of the queried table.

    Returns:
        The same statement whose WHERE tree (if any) is a homomorphic
        expression tree.

    Raises:
        UnknownTableError: the schema is for another table.
        UnknownColumnError: a selected or compared column is missing.
        WidthMismatchError: incompatible widths, or a literal too large
            for its column.

    """
    if statement.table != schema.name:
        raise UnknownTableError(
            f"Query targets '{statement.table}', schema is '{schema.name}'"
        )
    schema.select(statement.columns)
    if statement.where is None:
        return statement
    where = map_literals(
        statement.where,
        schema,
        lambda value, width: backend.encrypt(key, value, width),
    )
    logger.debug("Compiled WHERE clause for table '%s'", statement.table)
    return SelectStatement(statement.columns, statement.table, where)
