"""Query syntax tree.

Nodes dump to the canonical JSON shape::

    {"type": "SelectStatement", "columns": [...],
     "from": {"type": "Table", "name": ...}, "where": {...}}

with ``BinaryExpression`` (AND/OR), ``ComparisonExpression``,
``Identifier``, ``Number`` and ``EncryptedLiteral`` nodes. A redacted
literal keeps its node type and holds the placeholder ``"⊥"``.

"""
from __future__ import annotations

from dataclasses import dataclass
from dataclasses import field
from typing import Any
from typing import Dict
from typing import Iterator
from typing import Optional
from typing import Tuple
from typing import Union

from maskdb.crypto import codec
from maskdb.crypto.types import Ciphertext
from maskdb.exceptions import AstFormatError
from maskdb.exceptions import CorruptCiphertextError

PLACEHOLDER = "⊥"

COMPARISON_OPERATORS = ("=", "<", "<=", ">", ">=")
BOOLEAN_OPERATORS = ("AND", "OR")


@dataclass(frozen=True)
class Identifier:
    """Column reference."""

    name: str

    def to_dict(self) -> Dict[str, Any]:  # noqa: D102
        return {"type": "Identifier", "name": self.name}


@dataclass(frozen=True)
class Number:
    """Plaintext unsigned integer literal."""

    value: int

    def to_dict(self) -> Dict[str, Any]:  # noqa: D102
        return {"type": "Number", "value": self.value}


@dataclass(frozen=True)
class EncryptedLiteral:
    """Literal replaced by its ciphertext."""

    ciphertext: Ciphertext = field(repr=False)

    def to_dict(self) -> Dict[str, Any]:  # noqa: D102
        return {
            "type": "EncryptedLiteral",
            "value": codec.to_b64(self.ciphertext),
        }


@dataclass(frozen=True)
class Redacted:
    """Literal whose value was replaced by the placeholder."""

    literal_type: str = "EncryptedLiteral"

    def to_dict(self) -> Dict[str, Any]:  # noqa: D102
        return {"type": self.literal_type, "value": PLACEHOLDER}


Literal = Union[Number, EncryptedLiteral, Redacted]
Operand = Union[Identifier, Literal]


@dataclass(frozen=True)
class Comparison:
    """``left <operator> right`` over operands."""

    operator: str
    left: Operand
    right: Operand

    def to_dict(self) -> Dict[str, Any]:  # noqa: D102
        return {
            "type": "ComparisonExpression",
            "operator": self.operator,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }


@dataclass(frozen=True)
class Binary:
    """``left AND|OR right`` over boolean nodes."""

    operator: str
    left: Expr
    right: Expr

    def to_dict(self) -> Dict[str, Any]:  # noqa: D102
        return {
            "type": "BinaryExpression",
            "operator": self.operator,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }


Expr = Union[Binary, Comparison]
Node = Union[
    Binary, Comparison, Identifier, Number, EncryptedLiteral, Redacted
]


@dataclass(frozen=True)
class SelectStatement:
    """``SELECT columns FROM table [WHERE where]``."""

    columns: Tuple[str, ...]
    table: str
    where: Optional[Expr] = None

    def to_dict(self) -> Dict[str, Any]:  # noqa: D102
        data: Dict[str, Any] = {
            "type": "SelectStatement",
            "columns": list(self.columns),
            "from": {"type": "Table", "name": self.table},
        }
        if self.where is not None:
            data["where"] = self.where.to_dict()
        return data

    @property
    def selects_all(self) -> bool:  # noqa: D102
        return list(self.columns) == ["*"]


def walk(node: Optional[Node]) -> Iterator[Node]:
    """Iterate a subtree depth-first, left before right.

    Args:
        node: root, or ``None`` for an empty tree.

    Yields:
        Every node, parents before children.

    """
    if node is None:
        return
    yield node
    if isinstance(node, (Binary, Comparison)):
        yield from walk(node.left)
        yield from walk(node.right)


def literals(node: Optional[Node]) -> Iterator[Literal]:
    """Iterate literal leaves.

    Args:
        node: root of the subtree.

    Returns:
        Number, EncryptedLiteral and Redacted leaves, left to right.

    """
    return (
        leaf
        for leaf in walk(node)
        if isinstance(leaf, (Number, EncryptedLiteral, Redacted))
    )


def _require(data: Any, key: str) -> Any:
    if not isinstance(data, dict) or key not in data:
        raise AstFormatError(f"Missing '{key}' in AST node")
    return data[key]


def _operand_from_dict(data: Any) -> Operand:
    kind = _require(data, "type")
    if kind == "Identifier":
        name = _require(data, "name")
        if not isinstance(name, str):
            raise AstFormatError("Identifier name must be a string")
        return Identifier(name)
    if kind not in ("Number", "EncryptedLiteral"):
        raise AstFormatError(f"Unexpected operand type '{kind}'")
    value = _require(data, "value")
    if value == PLACEHOLDER:
        return Redacted(kind)
    if kind == "Number":
        if isinstance(value, bool) or not isinstance(value, int) or value < 0:
            raise AstFormatError("Number value must be an unsigned integer")
        return Number(value)
    if not isinstance(value, str):
        raise AstFormatError("EncryptedLiteral value must be base64 text")
    try:
        return EncryptedLiteral(codec.from_b64(value))
    except CorruptCiphertextError as exc:
        raise AstFormatError(f"Bad encrypted literal: {exc}") from exc


def expr_from_dict(data: Any) -> Expr:
    """Rebuild a WHERE tree from its JSON form.

    Args:
        data: decoded JSON object.

    Returns:
        The expression.

    Raises:
        AstFormatError: unknown node type or operator.

    """
    kind = _require(data, "type")
    operator = _require(data, "operator")
    if kind == "BinaryExpression":
        if operator not in BOOLEAN_OPERATORS:
            raise AstFormatError(f"Bad boolean operator '{operator}'")
        return Binary(
            operator,
            expr_from_dict(_require(data, "left")),
            expr_from_dict(_require(data, "right")),
        )
    if kind == "ComparisonExpression":
        if operator not in COMPARISON_OPERATORS:
            raise AstFormatError(f"Bad comparison operator '{operator}'")
        return Comparison(
            operator,
            _operand_from_dict(_require(data, "left")),
            _operand_from_dict(_require(data, "right")),
        )
    raise AstFormatError(f"Unexpected expression type '{kind}'")


def statement_from_dict(data: Any) -> SelectStatement:
    """Rebuild a statement from its JSON form.

    Args:
        data: decoded JSON object.

    Returns:
        The statement.

    Raises:
        AstFormatError: the object does not describe a SELECT.

    """
    if _require(data, "type") != "SelectStatement":
        raise AstFormatError("Only SelectStatement is supported")
    columns = _require(data, "columns")
    if (
        not isinstance(columns, list)
        or not columns
        or not all(isinstance(column, str) for column in columns)
    ):
        raise AstFormatError("columns must be a non-empty list of names")
    source = _require(data, "from")
    if _require(source, "type") != "Table":
        raise AstFormatError("from must reference a Table")
    table = _require(source, "name")
    if not isinstance(table, str):
        raise AstFormatError("Table name must be a string")
    where = data.get("where")
    return SelectStatement(
        columns=tuple(columns),
        table=table,
        where=None if where is None else expr_from_dict(where),
    )
