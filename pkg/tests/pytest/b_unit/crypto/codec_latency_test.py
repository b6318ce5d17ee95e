"""Ciphertext encoding, latency tables and operation statistics."""
from __future__ import annotations

import json

import pytest

from maskdb.crypto import codec
from maskdb.crypto.base import BackendStats
from maskdb.crypto.latency import LatencyTable
from maskdb.crypto.types import OpKey
from maskdb.exceptions import CorruptCiphertextError

from tests.paths import DEFAULT_LATENCY_TABLE


def test_codec_header(backend, key) -> None:
    """Encoded ciphertexts start with the FHEC header.

    Args:
        backend: pytest fixture - see :func:`backend_`.
        key: pytest fixture - see :func:`key_`.

    """
    ct = backend.encrypt(key, 99, 8)
    raw = codec.encode(ct)
    assert raw[:4] == b"FHEC"
    assert raw[4] == codec.VERSION
    assert raw[6] == 8
    assert len(raw) == codec.HEADER_SIZE + len(ct.payload)
    assert codec.decode(raw) == ct
    assert codec.from_b64(codec.to_b64(ct)) == ct


CORRUPTIONS = {
    "truncated_header": lambda raw: raw[:5],
    "bad_magic": lambda raw: b"XHEC" + raw[4:],
    "bad_version": lambda raw: raw[:4] + b"\x09" + raw[5:],
    "bad_width": lambda raw: raw[:6] + b"\x10" + raw[7:],
    "bad_trivial_flag": lambda raw: raw[:7] + b"\x02" + raw[8:],
    "short_payload": lambda raw: raw[:-1],
    "long_payload": lambda raw: raw + b"\x00",
}


@pytest.mark.parametrize(
    "corrupt", CORRUPTIONS.values(), ids=CORRUPTIONS.keys()
)
def test_codec_rejects(backend, key, corrupt) -> None:
    """Malformed FHEC bytes are refused.

    Args:
        backend: pytest fixture - see :func:`backend_`.
        key: pytest fixture - see :func:`key_`.
        corrupt: pytest parametrized arg - from :obj:`CORRUPTIONS`.

    """
    raw = codec.encode(backend.encrypt(key, 1, 32))
    with pytest.raises(CorruptCiphertextError):
        codec.decode(corrupt(raw))


def test_codec_rejects_bad_base64() -> None:
    """Base64 noise is refused."""
    with pytest.raises(CorruptCiphertextError):
        codec.from_b64("not base64!!")


def test_default_table_values() -> None:
    """Packaged medians used by the cost formulas."""
    table = LatencyTable.default()
    assert table.median("eq", 32) == pytest.approx(41.91)
    assert table.median("cmux", 32, trivial=True) == pytest.approx(48.91)
    assert table.median("encrypt", 32) == pytest.approx(1.4771)
    assert table.median("decrypt", 32) == pytest.approx(0.0084904)
    assert table == LatencyTable.from_file(DEFAULT_LATENCY_TABLE)


def test_width_one_billed_as_u8() -> None:
    """Booleans cost as much as bytes."""
    table = LatencyTable.default()
    assert table.median("decrypt", 1) == table.median("decrypt", 8)
    assert table.median("and", 1) == table.median("and", 8)


def test_trivial_fallback() -> None:
    """A missing variant falls back to the other one."""
    table = LatencyTable.default()
    assert table.median("eq", 32, trivial=True) == table.median("eq", 32)
    assert table.median("trivial_encrypt", 32) == pytest.approx(0.00244)


def test_missing_entry() -> None:
    """Unknown (op, width) pairs raise KeyError."""
    table = LatencyTable.from_entries(
        [{"op": "eq", "width": 32, "median_ms": 1.0}]
    )
    with pytest.raises(KeyError):
        table.median("eq", 8)


@pytest.mark.parametrize(
    "entry",
    [
        {"op": "eq", "width": 32, "median_ms": 0},
        {"op": "eq", "width": 32, "median_ms": -1.5},
        {"op": "teleport", "width": 32, "median_ms": 1.0},
    ],
)
def test_invalid_entries(entry) -> None:
    """Non-positive medians and unknown operations are refused.

    Args:
        entry: pytest parametrized arg.

    """
    with pytest.raises(ValueError, match="."):
        LatencyTable.from_entries([entry])


def test_table_from_file(tmp_path) -> None:
    """A JSON file overrides the packaged table.

    Args:
        tmp_path: pytest fixture.

    """
    path = tmp_path / "latency.json"
    path.write_text(
        json.dumps([{"op": "eq", "width": 32, "median_ms": 2.5}])
    )
    table = LatencyTable.from_file(path)
    assert table.cost({OpKey("eq", 32): 4}) == pytest.approx(10.0)
    assert LatencyTable.from_entries(table.to_entries()) == table


def test_backend_stats(backend, key) -> None:
    """Counters track op, width and operand triviality.

    Args:
        backend: pytest fixture - see :func:`backend_`.
        key: pytest fixture - see :func:`key_`.

    """
    backend.reset_stats()
    a = backend.encrypt(key, 3, 32)
    zero = backend.trivial_encrypt(0, 32)
    backend.he_eq(a, a)
    backend.he_eq(a, zero)
    stats = backend.stats()
    assert stats.count("encrypt", 32) == 1
    assert stats.count("trivial_encrypt", 32, trivial=True) == 1
    assert stats.count("eq") == 2
    assert stats.count("eq", 32, trivial=True) == 1
    assert stats.total == 4
    flat = stats.as_dict()
    assert flat["eq/u32"] == 1
    assert flat["eq/u32/trivial"] == 1
    assert BackendStats.from_dict(flat) == stats
    expected = 1.4771 + 0.00244 + 2 * 41.91
    assert stats.simulated_latency_ms == pytest.approx(expected)
    backend.reset_stats()
    assert backend.stats().total == 0
