"""Per-operation median latencies used to bill simulated time.

The package ships ``latency.json`` with measured medians for 8 and 32
bit operands. Width-1 operations (encrypted booleans) are billed as
8-bit ones. A file with the same schema can replace the defaults, for
example with medians measured on a real backend.

"""
from __future__ import annotations

import json
import logging
import math
from functools import lru_cache
from pathlib import Path
from typing import Dict
from typing import Iterable
from typing import List
from typing import Mapping
from typing import Tuple
from typing import Union

from maskdb.crypto.types import Op
from maskdb.crypto.types import OpKey
from maskdb.paths import DEFAULT_LATENCY_TABLE

logger = logging.getLogger(__name__)

Entry = Dict[str, Union[str, int, bool, float]]
_Key = Tuple[str, int, bool]


def _table_width(width: int) -> int:
    return 8 if width == 1 else width


class LatencyTable:
    """Mapping (op, width, trivial) to a median latency in milliseconds."""

    def __init__(self, medians: Mapping[_Key, float]) -> None:
        """Validate and store the medians.

        Args:
            medians: latency for every (op, width, trivial) known.

        Raises:
            ValueError: a latency is not strictly positive, or an op is
                unknown.

        """
        known = {op.value for op in Op}
        for (op, width, trivial), median in medians.items():
            if op not in known:
                raise ValueError(f"Unknown operation '{op}' in latency table")
            if not median > 0:
                raise ValueError(
                    f"Latency for {op}/u{width} (trivial={trivial})"
                    f" must be > 0, got {median}"
                )
        self._medians = dict(medians)

    @classmethod
    def from_entries(cls, entries: Iterable[Entry]) -> LatencyTable:
        """Build from a list of ``{op, width, trivial, median_ms}``.

        Args:
            entries: raw table rows.

        Returns:
            The table.

        """
        medians = {
            (
                str(entry["op"]),
                int(entry["width"]),
                bool(entry.get("trivial", False)),
            ): float(entry["median_ms"])
            for entry in entries
        }
        return cls(medians)

    @classmethod
    def from_file(cls, path: Path) -> LatencyTable:
        """Load a JSON latency table.

        Args:
            path: JSON file holding a list of entries.

        Returns:
            The table.

        """
        logger.info("Loading latency table from %s", path)
        return cls.from_entries(json.loads(Path(path).read_text()))

    @classmethod
    def default(cls) -> LatencyTable:
        """Get the packaged defaults.

        Returns:
            The shared default table.

        """
        return _default_table()

    def median(self, op: str, width: int, trivial: bool = False) -> float:
        """Look up one latency.

        A missing trivial (or non-trivial) variant falls back to the
        other one.

        Args:
            op: operation kind.
            width: operand width; 1 is billed as 8.
            trivial: whether an operand was a trivial encryption.

        Returns:
            Median latency in milliseconds.

        Raises:
            KeyError: no entry for the op and width.

        """
        op = Op(op).value
        table_width = _table_width(width)
        for flag in (trivial, not trivial):
            key = (op, table_width, flag)
            if key in self._medians:
                return self._medians[key]
        raise KeyError(f"No latency for {op}/u{width}")

    def cost(self, counts: Mapping[OpKey, int]) -> float:
        """Bill a set of operation counts.

        Args:
            counts: how many times each operation ran.

        Returns:
            Sum over counters of count times median, in milliseconds.

        """
        return math.fsum(
            count * self.median(key.op, key.width, key.trivial)
            for key, count in sorted(counts.items())
            if count
        )

    def to_entries(self) -> List[Entry]:
        """Dump as JSON-friendly rows.

        Returns:
            Sorted table rows.

        """
        return [
            {"op": op, "width": width, "trivial": trivial, "median_ms": ms}
            for (op, width, trivial), ms in sorted(self._medians.items())
        ]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LatencyTable):
            return NotImplemented
        return self._medians == other._medians

    def __hash__(self) -> int:
        return hash(tuple(sorted(self._medians.items())))


@lru_cache(maxsize=1)
def _default_table() -> LatencyTable:
    return LatencyTable.from_file(DEFAULT_LATENCY_TABLE)
