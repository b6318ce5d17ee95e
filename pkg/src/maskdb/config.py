"""Runtime settings for the maskdb server and client commands.

Values are resolved with this precedence: explicit flag, ``MASKDB_*``
environment variable, JSON config file, built-in default.

"""
from __future__ import annotations

import dataclasses
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any
from typing import Callable
from typing import Dict
from typing import Mapping
from typing import Optional
from typing import Tuple

from maskdb.paths import DATA_DIR

logger = logging.getLogger(__name__)

MiB = 1024 * 1024

_TRUTHY = {"1", "on", "true", "yes"}
_FALSY = {"0", "off", "false", "no"}


def parse_switch(value: Any) -> bool:
    """Parse an on/off switch from a flag, env var or config value.

    Args:
        value: a bool, or one of ``on/off/true/false/yes/no/1/0``.

    Returns:
        The boolean value.

    Raises:
        ValueError: the value is not a recognized switch.

    """
    if isinstance(value, bool):
        return value
    lowered = str(value).strip().lower()
    if lowered in _TRUTHY:
        return True
    if lowered in _FALSY:
        return False
    raise ValueError(f"Invalid switch value '{value}', use 'on' or 'off'")


@dataclass(frozen=True)
class Settings:
    """Server and storage settings."""

    listen: str = "127.0.0.1:7878"
    data_dir: Path = DATA_DIR
    backend: str = "sim"
    cache_hot: int = 16 * MiB
    cache_warm: int = 128 * MiB
    segment_size: int = 64 * MiB
    compaction_threshold: float = 0.4
    latency_table: Optional[Path] = None
    return_mask: bool = True
    max_frame: int = 64 * MiB
    transcript_uri: str = "memory://?stream=transcripts"
    workers: int = 4
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.cache_hot < 0 or self.cache_warm < 0:
            raise ValueError("Cache capacities must be non-negative")
        if self.segment_size <= 0 or self.max_frame <= 0:
            raise ValueError("Segment and frame sizes must be positive")
        if not 0.0 < self.compaction_threshold <= 1.0:
            raise ValueError("compaction_threshold must be in (0, 1]")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        _ = self.address

    @property
    def address(self) -> Tuple[str, int]:
        """Split ``listen`` into host and port.

        Returns:
            (host, port) tuple.

        Raises:
            ValueError: ``listen`` is not ``host:port``.

        """
        host, sep, port = self.listen.rpartition(":")
        if not sep or not port.isdigit():
            raise ValueError(f"Invalid listen address '{self.listen}'")
        return host or "127.0.0.1", int(port)

    @property
    def keys_dir(self) -> Path:  # noqa: D102
        return self.data_dir / "keys"

    @property
    def store_dir(self) -> Path:  # noqa: D102
        return self.data_dir / "store"

    @classmethod
    def from_file(cls, path: Path) -> Settings:
        """Load settings from a JSON config file.

        Args:
            path: JSON object whose keys are :class:`Settings` fields.

        Returns:
            Settings with the file values applied over the defaults.

        Raises:
            ValueError: the file has keys which are not settings.

        """
        raw = json.loads(Path(path).read_text())
        if not isinstance(raw, dict):
            raise ValueError(f"Config file {path} must hold a JSON object")
        unknown = sorted(set(raw) - _FIELDS.keys())
        if unknown:
            raise ValueError(f"Unknown config keys in {path}: {unknown}")
        return cls().merge(**raw)

    def merge(self, **overrides: Any) -> Settings:
        """Return a copy with the non-``None`` overrides applied.

        Args:
            overrides: field values, either typed or as strings.

        Returns:
            The updated settings.

        """
        changes = {
            name: _FIELDS[name](value)
            for name, value in overrides.items()
            if value is not None
        }
        return dataclasses.replace(self, **changes)

    def with_env(self, environ: Mapping[str, str] = os.environ) -> Settings:
        """Apply ``MASKDB_*`` environment variables.

        Args:
            environ: environment to read, defaults to the process one.

        Returns:
            The updated settings.

        """
        found = {
            name: environ[f"MASKDB_{name.upper()}"]
            for name in _FIELDS
            if f"MASKDB_{name.upper()}" in environ
        }
        if found:
            logger.debug("Settings from environment: %s", sorted(found))
        return self.merge(**found)

    @classmethod
    def load(
        cls, config_file: Optional[Path] = None, **flags: Any
    ) -> Settings:
        """Resolve settings from every source.

        Args:
            config_file: optional JSON config file.
            flags: explicit values, ``None`` meaning unset.

        Returns:
            The resolved settings.

        """
        base = cls.from_file(config_file) if config_file else cls()
        return base.with_env().merge(**flags)

    def to_dict(self) -> Dict[str, Any]:
        """Dump as JSON-friendly dict.

        Returns:
            Field name to value, paths as strings.

        """
        return {
            name: str(value) if isinstance(value, Path) else value
            for name, value in dataclasses.asdict(self).items()
        }


def _optional_path(value: Any) -> Optional[Path]:
    return Path(value).expanduser() if value else None


def _optional_int(value: Any) -> Optional[int]:
    return int(value) if value not in ("", None) else None


_FIELDS: Dict[str, Callable[[Any], Any]] = {
    "listen": str,
    "data_dir": lambda value: Path(value).expanduser(),
    "backend": str,
    "cache_hot": int,
    "cache_warm": int,
    "segment_size": int,
    "compaction_threshold": float,
    "latency_table": _optional_path,
    "return_mask": parse_switch,
    "max_frame": int,
    "transcript_uri": str,
    "workers": int,
    "seed": _optional_int,
}
