"""Settings resolution: defaults, config file, environment, flags."""
from __future__ import annotations

import json
from pathlib import Path

import pytest

from maskdb.config import parse_switch
from maskdb.config import Settings

from tests.paths import SERVER_CONFIG


def test_defaults() -> None:
    """Defaults serve locally with the simulated backend."""
    settings = Settings()
    assert settings.address == ("127.0.0.1", 7878)
    assert settings.backend == "sim"
    assert settings.return_mask
    assert settings.store_dir == settings.data_dir / "store"
    assert settings.keys_dir == settings.data_dir / "keys"


def test_precedence(monkeypatch, tmp_path) -> None:
    """Flags beat environment, which beats the config file.

    Args:
        monkeypatch: pytest fixture.
        tmp_path: pytest fixture.

    """
    monkeypatch.setenv("MASKDB_WORKERS", "8")
    monkeypatch.setenv("MASKDB_RETURN_MASK", "off")
    monkeypatch.setenv("MASKDB_DATA_DIR", str(tmp_path))
    settings = Settings.load(SERVER_CONFIG, seed=None, cache_hot=0)
    assert settings.workers == 8
    assert settings.return_mask is False
    assert settings.data_dir == tmp_path
    assert settings.seed == 7
    assert settings.segment_size == 65536
    assert settings.cache_hot == 0
    assert settings.address == ("127.0.0.1", 0)


def test_to_dict_reloads(tmp_path) -> None:
    """Dumped settings are a valid config file.

    Args:
        tmp_path: pytest fixture.

    """
    settings = Settings.load(SERVER_CONFIG, data_dir=tmp_path)
    path = tmp_path / "dumped.json"
    path.write_text(json.dumps(settings.to_dict()))
    assert Settings.from_file(path) == settings


@pytest.mark.parametrize(
    "overrides",
    [
        {"listen": "localhost"},
        {"listen": "host:port"},
        {"compaction_threshold": 0},
        {"compaction_threshold": 1.5},
        {"workers": 0},
        {"cache_hot": -1},
        {"segment_size": 0},
        {"return_mask": "maybe"},
    ],
)
def test_invalid_values(overrides) -> None:
    """Bad values are refused when settings are built.

    Args:
        overrides: pytest parametrized arg.

    """
    with pytest.raises(ValueError):
        Settings().merge(**overrides)


def test_unknown_config_key(tmp_path: Path) -> None:
    """Config files may only hold known settings.

    Args:
        tmp_path: pytest fixture.

    """
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"listen": ":1", "colour": "blue"}))
    with pytest.raises(ValueError, match="colour"):
        Settings.from_file(path)
    path.write_text("[]")
    with pytest.raises(ValueError, match="JSON object"):
        Settings.from_file(path)


@pytest.mark.parametrize(
    "value,expected",
    [("on", True), ("YES", True), (" 1 ", True), ("off", False), (0, False)],
)
def test_parse_switch(value, expected) -> None:
    """Switches accept the usual spellings.

    Args:
        value: pytest parametrized arg.
        expected: pytest parametrized arg.

    """
    assert parse_switch(value) is expected
