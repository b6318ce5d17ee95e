"""Operation counts and latency predictions for queries and lookups.

The engine's work is fixed by the row count, the WHERE tree and the
selected columns, so the exact number of homomorphic operations of a
query can be computed before running it. Billing those counts against
a :class:`LatencyTable` gives its simulated cost.

"""
from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass
from dataclasses import field
from typing import Dict
from typing import List
from typing import Mapping
from typing import Optional
from typing import Union

from maskdb.crypto.base import BackendStats
from maskdb.crypto.latency import LatencyTable
from maskdb.crypto.types import Op
from maskdb.crypto.types import OpKey
from maskdb.exceptions import CostModelMismatchError
from maskdb.sql.ast import Binary
from maskdb.sql.ast import EncryptedLiteral
from maskdb.sql.ast import Expr
from maskdb.sql.ast import Number
from maskdb.sql.ast import Redacted
from maskdb.sql.ast import SelectStatement
from maskdb.sql.compiler import comparison_width
from maskdb.types import TableSchema

logger = logging.getLogger(__name__)

Counts = Dict[OpKey, int]

COMPARISON_OPS = {"=": Op.EQ, "<": Op.LT, "<=": Op.LE, ">": Op.LT, ">=": Op.LE}
BOOLEAN_OPS = {"AND": Op.AND, "OR": Op.OR}


def _key(op: Op, width: int, trivial: bool = False) -> OpKey:
    return OpKey(op.value, width, trivial)


def estimate_client_time(
    n: int, table: Optional[LatencyTable] = None
) -> float:
    """Client cost of a lookup over `n` entries.

    One u32 encryption of the key, then 2n u32 decryptions.

    Args:
        n: table size.
        table: latency table, defaults to the packaged one.

    Returns:
        Milliseconds.

    """
    if n < 0:
        raise ValueError("n must be >= 0")
    table = table or LatencyTable.default()
    return table.median("encrypt", 32) + 2 * n * table.median("decrypt", 32)


def estimate_server_time(
    n: int, table: Optional[LatencyTable] = None
) -> float:
    """Server cost of a lookup over `n` entries.

    n u32 equality tests and 2n multiplexers whose else branch is a
    trivial encryption. Creating that trivial zero is left out.

    Args:
        n: table size.
        table: latency table, defaults to the packaged one.

    Returns:
        Milliseconds.

    """
    if n < 0:
        raise ValueError("n must be >= 0")
    table = table or LatencyTable.default()
    return n * table.median("eq", 32) + 2 * n * table.median(
        "cmux", 32, trivial=True
    )


@dataclass(frozen=True)
class CostLine:
    """One row of a cost breakdown."""

    side: str
    key: OpKey
    count: int
    unit_ms: float

    @property
    def total_ms(self) -> float:  # noqa: D102
        return self.count * self.unit_ms


@dataclass(frozen=True)
class CostEstimate:
    """Predicted operation counts of one request, billed."""

    server_ops: Counts
    client_ops: Counts
    table: LatencyTable = field(
        default_factory=LatencyTable.default, repr=False
    )

    @property
    def server_ms(self) -> float:  # noqa: D102
        return self.table.cost(self.server_ops)

    @property
    def client_ms(self) -> float:  # noqa: D102
        return self.table.cost(self.client_ops)

    @property
    def total_ms(self) -> float:  # noqa: D102
        return math.fsum((self.server_ms, self.client_ms))

    def breakdown(self) -> List[CostLine]:
        """Counts times unit latencies, server side first.

        Returns:
            One line per operation kind; their totals add up to
            :attr:`server_ms` and :attr:`client_ms`.

        """
        return [
            CostLine(
                side,
                key,
                count,
                self.table.median(key.op, key.width, key.trivial),
            )
            for side, ops in (
                ("server", self.server_ops),
                ("client", self.client_ops),
            )
            for key, count in sorted(ops.items())
            if count
        ]

    def to_dict(self) -> dict:  # noqa: D102
        return {
            "server_ms": self.server_ms,
            "client_ms": self.client_ms,
            "breakdown": [
                {
                    "side": line.side,
                    "op": str(line.key),
                    "count": line.count,
                    "unit_ms": line.unit_ms,
                    "total_ms": line.total_ms,
                }
                for line in self.breakdown()
            ],
        }


def _tree_ops(node: Expr, schema: TableSchema, counts: Counter) -> None:
    if isinstance(node, Binary):
        _tree_ops(node.left, schema, counts)
        _tree_ops(node.right, schema, counts)
        counts[_key(BOOLEAN_OPS[node.operator], 1)] += 1
        return
    width = comparison_width(node, schema)
    counts[_key(COMPARISON_OPS[node.operator], width)] += 1


def _literal_widths(node: Optional[Expr], schema: TableSchema) -> Counter:
    widths: Counter = Counter()
    if node is None:
        return widths
    if isinstance(node, Binary):
        return _literal_widths(node.left, schema) + _literal_widths(
            node.right, schema
        )
    width = comparison_width(node, schema)
    for operand in (node.left, node.right):
        if isinstance(operand, (Number, EncryptedLiteral, Redacted)):
            widths[width] += 1
    return widths


def _scale(counts: Mapping[OpKey, int], factor: int) -> Counter:
    return Counter({key: count * factor for key, count in counts.items()})


def _masking_ops(n: int, widths: List[int]) -> Counter:
    ops: Counter = Counter()
    for width in sorted(set(widths)):
        ops[_key(Op.TRIVIAL_ENCRYPT, width, True)] += 1
    for width in widths:
        ops[_key(Op.CMUX, width, True)] += n
    return ops


def _decrypt_ops(rows: int, widths: List[int], mask_bits: int) -> Counter:
    ops: Counter = Counter()
    for width in widths:
        ops[_key(Op.DECRYPT, width)] += rows
    if mask_bits:
        ops[_key(Op.DECRYPT, 1)] += mask_bits
    return ops


def _positive(counts: Counter) -> Counts:
    return {key: count for key, count in counts.items() if count}


def predict_query(
    statement: SelectStatement,
    schema: TableSchema,
    n: Optional[int] = None,
    return_mask: bool = True,
    table: Optional[LatencyTable] = None,
) -> CostEstimate:
    """Operation counts of a SELECT over `n` rows.

    Args:
        statement: plaintext or encrypted statement.
        schema: catalog entry of the queried table.
        n: row count; defaults to the catalog's.
        return_mask: whether the server returns the mask.
        table: latency table, defaults to the packaged one.

    Returns:
        The estimate.

    """
    n = schema.row_count if n is None else n
    widths = [
        schema.column(name).width for name in schema.select(statement.columns)
    ]
    server: Counter = Counter()
    if statement.where is None:
        server[_key(Op.TRIVIAL_ENCRYPT, 1, True)] += n
    else:
        per_row: Counter = Counter()
        _tree_ops(statement.where, schema, per_row)
        server += _scale(per_row, n)
    server += _masking_ops(n, widths)

    client: Counter = Counter()
    for width, count in _literal_widths(statement.where, schema).items():
        client[_key(Op.ENCRYPT, width)] += count
    client += _decrypt_ops(n, widths, n if return_mask else 0)
    return CostEstimate(
        _positive(server), _positive(client), table or LatencyTable.default()
    )


def predict_pir(
    n: int,
    key_width: int = 32,
    value_width: int = 32,
    aggregate: bool = False,
    return_mask: bool = True,
    table: Optional[LatencyTable] = None,
) -> CostEstimate:
    """Operation counts of a private lookup over `n` pairs.

    Args:
        n: table size.
        key_width: width of the key column.
        value_width: width of the value column.
        aggregate: whether the server folds the pairs.
        return_mask: whether the server returns the mask.
        table: latency table, defaults to the packaged one.

    Returns:
        The estimate.

    """
    widths = [key_width, value_width]
    server: Counter = Counter({_key(Op.EQ, key_width): n})
    server += _masking_ops(n, widths)
    client: Counter = Counter({_key(Op.ENCRYPT, key_width): 1})
    if aggregate:
        if n:
            for width in widths:
                server[_key(Op.ADD, width)] += n - 1
        else:
            for width in sorted(set(widths)):
                server[_key(Op.TRIVIAL_ENCRYPT, width, True)] += 1
        client += _decrypt_ops(1, widths, 0)
    else:
        client += _decrypt_ops(n, widths, n if return_mask else 0)
    return CostEstimate(
        _positive(server), _positive(client), table or LatencyTable.default()
    )


@dataclass(frozen=True)
class CostReport:
    """Outcome of comparing measured counts with a prediction."""

    estimate: CostEstimate
    server_ops: Optional[Counts]
    client_ops: Optional[Counts]

    @property
    def measured_server_ms(self) -> Optional[float]:  # noqa: D102
        if self.server_ops is None:
            return None
        return self.estimate.table.cost(self.server_ops)


Measured = Union[BackendStats, Mapping[OpKey, int], None]


def _counters(measured: Measured) -> Optional[Counts]:
    if measured is None:
        return None
    if isinstance(measured, BackendStats):
        measured = measured.counters
    return {key: count for key, count in measured.items() if count}


def _diff(side: str, expected: Counts, measured: Counts) -> List[str]:
    return [
        f"{side} {key}: expected {expected.get(key, 0)},"
        f" measured {measured.get(key, 0)}"
        for key in sorted(set(expected) | set(measured))
        if expected.get(key, 0) != measured.get(key, 0)
    ]


def verify_cost_model(
    estimate: CostEstimate,
    server: Measured = None,
    client: Measured = None,
) -> CostReport:
    """Check that a run performed exactly the predicted operations.

    Args:
        estimate: prediction for the run.
        server: server backend stats taken around the run.
        client: client backend stats taken around the run.

    Returns:
        The report.

    Raises:
        CostModelMismatchError: a counter differs; the message names
            every divergent one.

    """
    server_ops = _counters(server)
    client_ops = _counters(client)
    problems: List[str] = []
    if server_ops is not None:
        problems += _diff("server", estimate.server_ops, server_ops)
    if client_ops is not None:
        problems += _diff("client", estimate.client_ops, client_ops)
    if problems:
        raise CostModelMismatchError("; ".join(problems))
    logger.debug("Cost model matched %s", estimate.to_dict())
    return CostReport(estimate, server_ops, client_ops)
