"""Types shared across the storage, sql and engine layers."""
from __future__ import annotations

from dataclasses import dataclass
from dataclasses import field
from dataclasses import replace
from typing import Any
from typing import Dict
from typing import List
from typing import Sequence
from typing import Tuple

from maskdb.crypto.types import check_width
from maskdb.crypto.types import Ciphertext
from maskdb.exceptions import SchemaMismatchError
from maskdb.exceptions import UnknownColumnError

TableName = str
OwnerId = str


@dataclass(frozen=True)
class ColumnDef:
    """Column name and bit-width."""

    name: str
    width: int = 32

    def __post_init__(self) -> None:
        check_width(self.width)
        if not self.name.isidentifier():
            raise SchemaMismatchError(f"Invalid column name '{self.name}'")


@dataclass(frozen=True)
class TableSchema:
    """Catalog entry for one table.

    `row_count` counts live rows; `next_row_id` is the id the next
    insert receives, so ids of deleted rows are never reused.

    """

    name: TableName
    columns: Tuple[ColumnDef, ...]
    owner_id: OwnerId = ""
    row_count: int = 0
    next_row_id: int = 0

    def __post_init__(self) -> None:
        if not self.name.isidentifier():
            raise SchemaMismatchError(f"Invalid table name '{self.name}'")
        if not self.columns:
            raise SchemaMismatchError("A table needs at least one column")
        names = [column.name for column in self.columns]
        if len(set(names)) != len(names):
            raise SchemaMismatchError(f"Duplicate column names in {names}")

    @property
    def column_names(self) -> List[str]:  # noqa: D102
        return [column.name for column in self.columns]

    def column(self, name: str) -> ColumnDef:
        """Look a column up by name.

        Args:
            name: column name, case-sensitive.

        Returns:
            The column definition.

        Raises:
            UnknownColumnError: no such column.

        """
        for column in self.columns:
            if column.name == name:
                return column
        raise UnknownColumnError(
            f"Unknown column '{name}' in table '{self.name}'"
        )

    def index(self, name: str) -> int:
        """Position of a column.

        Args:
            name: column name.

        Returns:
            Zero-based position in catalog order.

        """
        return self.columns.index(self.column(name))

    def select(self, columns: Sequence[str]) -> List[str]:
        """Expand a select list.

        Args:
            columns: names, or ``["*"]``.

        Returns:
            Concrete column names in request order.

        """
        if list(columns) == ["*"]:
            return self.column_names
        return [self.column(name).name for name in columns]

    def with_counts(self, row_count: int, next_row_id: int) -> TableSchema:
        """Copy with updated counters.

        Args:
            row_count: live rows.
            next_row_id: next id to hand out.

        Returns:
            The updated schema.

        """
        return replace(self, row_count=row_count, next_row_id=next_row_id)

    def to_dict(self) -> Dict[str, Any]:  # noqa: D102
        return {
            "name": self.name,
            "columns": [
                {"name": column.name, "width": column.width}
                for column in self.columns
            ],
            "owner_id": self.owner_id,
            "row_count": self.row_count,
            "next_row_id": self.next_row_id,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> TableSchema:  # noqa: D102
        return cls(
            name=data["name"],
            columns=tuple(
                ColumnDef(column["name"], int(column["width"]))
                for column in data["columns"]
            ),
            owner_id=data.get("owner_id", ""),
            row_count=int(data.get("row_count", 0)),
            next_row_id=int(data.get("next_row_id", 0)),
        )


@dataclass(frozen=True)
class EncryptedRow:
    """One row of ciphertexts in catalog column order."""

    row_id: int
    cells: Tuple[Ciphertext, ...] = field(repr=False)

    def __len__(self) -> int:
        return len(self.cells)

    def __getitem__(self, index: int) -> Ciphertext:
        return self.cells[index]

    def check(self, schema: TableSchema) -> EncryptedRow:
        """Validate against a schema.

        Args:
            schema: the table the row belongs to.

        Returns:
            The row, unchanged.

        Raises:
            SchemaMismatchError: wrong length or widths.

        """
        if len(self.cells) != len(schema.columns):
            raise SchemaMismatchError(
                f"Row has {len(self.cells)} cells, table '{schema.name}'"
                f" has {len(schema.columns)} columns"
            )
        for cell, column in zip(self.cells, schema.columns):
            if cell.width != column.width:
                raise SchemaMismatchError(
                    f"Column '{column.name}' is u{column.width},"
                    f" got u{cell.width}"
                )
        return self
