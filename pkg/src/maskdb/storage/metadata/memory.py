"""In-process metadata store, for tests and throwaway servers."""
from __future__ import annotations

import bisect
import threading
from typing import Dict
from typing import Iterable
from typing import Iterator
from typing import List
from typing import Mapping
from typing import Optional
from typing import Tuple

from maskdb.storage.metadata.base import Backend as Base


class Backend(Base):
    """Sorted key list plus a dict, guarded by one lock."""

    def connect(self) -> None:  # noqa: D102
        self._data: Dict[str, bytes] = {}
        self._keys: List[str] = []
        self._lock = threading.Lock()

    def get(self, key: str) -> Optional[bytes]:  # noqa: D102
        with self._lock:
            return self._data.get(key)

    def write_batch(  # noqa: D102
        self, puts: Mapping[str, bytes], deletes: Iterable[str] = ()
    ) -> None:
        with self._lock:
            for key in deletes:
                if self._data.pop(key, None) is not None:
                    del self._keys[bisect.bisect_left(self._keys, key)]
            for key, value in puts.items():
                if key not in self._data:
                    bisect.insort(self._keys, key)
                self._data[key] = bytes(value)

    def scan_prefix(  # noqa: D102
        self, prefix: str
    ) -> Iterator[Tuple[str, bytes]]:
        with self._lock:
            start = bisect.bisect_left(self._keys, prefix)
            items = []
            for key in self._keys[start:]:
                if not key.startswith(prefix):
                    break
                items.append((key, self._data[key]))
        return iter(items)
