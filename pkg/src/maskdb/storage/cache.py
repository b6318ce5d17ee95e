"""Hot/warm in-memory caches in front of the on-disk (cold) segments.

A record read from disk enters the warm tier. A second read while it is
still warm promotes it to hot. Hot evictions fall back to warm, warm
evictions are dropped. Both tiers are LRU and bounded in bytes.

"""
from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional


@dataclass
class CacheStats:
    """Hit counters per tier."""

    hot_hits: int = 0
    warm_hits: int = 0
    misses: int = 0
    promotions: int = 0
    evictions: int = 0

    @property
    def cold_reads(self) -> int:  # noqa: D102
        return self.misses


class _LruTier:
    def __init__(self, capacity: int) -> None:
        self.capacity = capacity
        self.size = 0
        self.items: OrderedDict[bytes, bytes] = OrderedDict()

    def __contains__(self, key: bytes) -> bool:
        return key in self.items

    def get(self, key: bytes) -> Optional[bytes]:
        value = self.items.get(key)
        if value is not None:
            self.items.move_to_end(key)
        return value

    def pop(self, key: bytes) -> Optional[bytes]:
        value = self.items.pop(key, None)
        if value is not None:
            self.size -= len(value)
        return value

    def put(self, key: bytes, value: bytes) -> list:
        """Insert, returning the evicted (key, value) pairs."""
        self.pop(key)
        if len(value) > self.capacity:
            return [(key, value)]
        self.items[key] = value
        self.size += len(value)
        evicted = []
        while self.size > self.capacity:
            old_key, old_value = self.items.popitem(last=False)
            self.size -= len(old_value)
            evicted.append((old_key, old_value))
        return evicted

    def clear(self) -> None:
        self.items.clear()
        self.size = 0


class TieredCache:
    """Two bounded LRU tiers with promotion on second access."""

    def __init__(self, hot_capacity: int, warm_capacity: int) -> None:
        """Create empty tiers.

        Args:
            hot_capacity: bytes held by the hot tier.
            warm_capacity: bytes held by the warm tier.

        """
        self._hot = _LruTier(hot_capacity)
        self._warm = _LruTier(warm_capacity)
        self._lock = threading.Lock()
        self.stats = CacheStats()

    def get(self, key: bytes) -> Optional[bytes]:
        """Look a record up, promoting warm hits.

        Args:
            key: blob hash.

        Returns:
            The cached bytes, or ``None`` on a miss.

        """
        with self._lock:
            value = self._hot.get(key)
            if value is not None:
                self.stats.hot_hits += 1
                return value
            value = self._warm.pop(key)
            if value is None:
                self.stats.misses += 1
                return None
            self.stats.warm_hits += 1
            self.stats.promotions += 1
            for old_key, old_value in self._hot.put(key, value):
                self._admit_warm(old_key, old_value)
            return value

    def put(self, key: bytes, value: bytes) -> None:
        """Admit a record read from disk into the warm tier.

        Args:
            key: blob hash.
            value: record payload.

        """
        with self._lock:
            if key in self._hot:
                return
            self._admit_warm(key, value)

    def _admit_warm(self, key: bytes, value: bytes) -> None:
        self.stats.evictions += len(self._warm.put(key, value))

    def tier_of(self, key: bytes) -> str:
        """Tier currently holding a record.

        Args:
            key: blob hash.

        Returns:
            ``hot``, ``warm`` or ``cold``.

        """
        with self._lock:
            if key in self._hot:
                return "hot"
            if key in self._warm:
                return "warm"
            return "cold"

    def discard(self, key: bytes) -> None:
        """Forget a record, eg after deletion.

        Args:
            key: blob hash.

        """
        with self._lock:
            self._hot.pop(key)
            self._warm.pop(key)

    def clear(self) -> None:
        """Drop every cached record, so the next reads go to disk."""
        with self._lock:
            self._hot.clear()
            self._warm.clear()

    @property
    def resident_bytes(self) -> dict:
        """Bytes held per tier.

        Returns:
            ``{"hot": int, "warm": int}``.

        """
        with self._lock:
            return {"hot": self._hot.size, "warm": self._warm.size}
