"""Testing utilities."""
from __future__ import annotations

import importlib.util
import subprocess as sp
import sys
import time
from pathlib import Path
from types import ModuleType
from typing import Dict
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple

from maskdb.sql.ast import Binary
from maskdb.sql.ast import Expr
from maskdb.sql.ast import Identifier
from maskdb.sql.ast import Number
from maskdb.sql.ast import Operand
from maskdb.sql.parser import parse_sql
from maskdb.types import ColumnDef

from tests.paths import DOCKER

Row = Tuple[int, ...]

EMPLOYEE_COLUMNS = (ColumnDef("age", 8), ColumnDef("salary", 32))
EMPLOYEE_ROWS: List[Row] = [
    (25, 900),
    (17, 400),
    (42, 1500),
    (18, 999),
    (63, 0),
]

_COMPARE = {
    "=": lambda left, right: left == right,
    "<": lambda left, right: left < right,
    "<=": lambda left, right: left <= right,
    ">": lambda left, right: left > right,
    ">=": lambda left, right: left >= right,
}


def import_from_path(name: str, path: Path) -> ModuleType:
    """Import a python file as a module.

    Args:
        name: name given to the module.
        path: python file.

    Returns:
        The executed module.

    """
    spec = importlib.util.spec_from_file_location(name, path)
    module = importlib.util.module_from_spec(spec)  # type: ignore
    sys.modules[name] = module
    spec.loader.exec_module(module)  # type: ignore
    return module


def _operand(node: Operand, row: Dict[str, int]) -> int:
    if isinstance(node, Identifier):
        return row[node.name]
    if isinstance(node, Number):
        return node.value
    raise TypeError(f"Plaintext oracle cannot evaluate {node!r}")


def _matches(node: Optional[Expr], row: Dict[str, int]) -> bool:
    if node is None:
        return True
    if isinstance(node, Binary):
        left = _matches(node.left, row)
        right = _matches(node.right, row)
        return left and right if node.operator == "AND" else left or right
    compare = _COMPARE[node.operator]
    return compare(_operand(node.left, row), _operand(node.right, row))


def plaintext_select(
    sql: str, columns: Sequence[str], rows: Sequence[Row]
) -> List[Row]:
    """Reference evaluation of a query over cleartext rows.

    Args:
        sql: query in the supported subset.
        columns: table column names, in order.
        rows: table rows.

    Returns:
        The selected values of the matching rows, in table order.

    """
    statement = parse_sql(sql)
    selected = (
        list(columns) if statement.selects_all else list(statement.columns)
    )
    matching = []
    for row in rows:
        named = dict(zip(columns, row))
        if _matches(statement.where, named):
            matching.append(tuple(named[name] for name in selected))
    return matching


COMPOSE_FILE = DOCKER / "docker-compose.yml"


def compose(*args: str) -> str:
    """Run docker-compose against the test services file.

    Args:
        args: docker-compose subcommand and its arguments.

    Returns:
        Captured stdout.

    """
    command = ["docker-compose", "-f", str(COMPOSE_FILE), *args]
    return sp.check_output(command, text=True)  # noqa: S603,S607


def wait_healthy(
    service: str, timeout_sec: float, poll_sec: float = 0.2
) -> None:
    """Block until the compose healthcheck of `service` passes.

    Args:
        service: compose service name.
        timeout_sec: how long to wait.
        poll_sec: delay between checks.

    Raises:
        TimeoutError: still unhealthy after `timeout_sec`; the service is
            stopped before raising.

    """
    deadline = time.monotonic() + timeout_sec
    while "(healthy)" not in compose("ps", service):
        if time.monotonic() > deadline:
            compose("down")
            raise TimeoutError(f"'{service}' unhealthy after {timeout_sec}s")
        time.sleep(poll_sec)
