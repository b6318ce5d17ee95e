"""Tables of ciphertext cells over blobs and metadata."""
from __future__ import annotations

import random
from collections import Counter

import pytest

from maskdb.crypto import codec
from maskdb.exceptions import CorruptionError
from maskdb.exceptions import SchemaMismatchError
from maskdb.exceptions import UnknownCellError
from maskdb.exceptions import UnknownTableError
from maskdb.storage.hybrid import CELL_PREFIX
from maskdb.storage.hybrid import HybridStore
from maskdb.storage.hybrid import MetadataEntry
from maskdb.storage.hybrid import REFS_PREFIX
from maskdb.types import ColumnDef

COLUMNS = (ColumnDef("age", 8), ColumnDef("salary", 32))


@pytest.fixture(name="table")
def table_(store):
    """An empty two-column table.

    Args:
        store: pytest fixture - see :func:`store_`.

    Returns:
        The store, with table ``t`` created.

    """
    store.ensure_table("t", COLUMNS, owner_id="alice")
    return store


def _cells(backend, key, age, salary):
    return [backend.encrypt(key, age, 8), backend.encrypt(key, salary, 32)]


def _decrypted(backend, key, store, table="t"):
    return [
        (row.row_id, [int(backend.decrypt(key, cell)) for cell in row.cells])
        for row in store.rows(table)
    ]


def test_ensure_table(table) -> None:
    """Tables are created once and checked afterwards.

    Args:
        table: pytest fixture - see :func:`table_`.

    """
    schema = table.ensure_table("t", COLUMNS)
    assert schema.owner_id == "alice"
    assert schema.column_names == ["age", "salary"]
    with pytest.raises(SchemaMismatchError):
        table.ensure_table("t", (ColumnDef("age", 32),))
    assert list(table.catalog()) == ["t"]


def test_insert_and_scan(backend, key, table) -> None:
    """Rows come back in id order with their cells in column order.

    Args:
        backend: pytest fixture - see :func:`backend_`.
        key: pytest fixture - see :func:`key_`.
        table: pytest fixture - see :func:`table_`.

    """
    ids = [
        table.insert_row("t", _cells(backend, key, age, salary), "alice")
        for age, salary in [(25, 900), (17, 400), (42, 1500)]
    ]
    assert ids == [0, 1, 2]
    assert _decrypted(backend, key, table) == [
        (0, [25, 900]),
        (1, [17, 400]),
        (2, [42, 1500]),
    ]
    assert table.schema("t").row_count == 3
    assert table.stats()["tables"] == {"t": 3}


def test_insert_checks_schema(backend, key, table) -> None:
    """Rows must match the column count and widths.

    Args:
        backend: pytest fixture - see :func:`backend_`.
        key: pytest fixture - see :func:`key_`.
        table: pytest fixture - see :func:`table_`.

    """
    with pytest.raises(SchemaMismatchError):
        table.insert_row("t", [backend.encrypt(key, 1, 8)])
    with pytest.raises(SchemaMismatchError):
        table.insert_row(
            "t", [backend.encrypt(key, 1, 32), backend.encrypt(key, 1, 32)]
        )
    with pytest.raises(UnknownTableError):
        table.insert_row("missing", _cells(backend, key, 1, 1))


def test_metadata_entries(backend, key, table) -> None:
    """Each cell points at its blob and its row key.

    Args:
        backend: pytest fixture - see :func:`backend_`.
        key: pytest fixture - see :func:`key_`.
        table: pytest fixture - see :func:`table_`.

    """
    cells = _cells(backend, key, 30, 700)
    row_id = table.insert_row("t", cells, "alice")
    entry = table.metadata_get("t", row_id, "salary")
    assert entry.owner_id == "alice"
    assert codec.decode(table.get_blob(entry.value_hash)) == cells[1]
    assert entry.key_hash == table.metadata_get("t", row_id, "age").value_hash
    assert MetadataEntry.from_bytes(entry.to_bytes()) == entry
    with pytest.raises(UnknownCellError):
        table.metadata_get("t", row_id, "bonus")
    with pytest.raises(UnknownTableError):
        table.metadata_get("missing", 0, "age")
    with pytest.raises(CorruptionError):
        MetadataEntry.from_bytes(b"{}")


def test_metadata_put_creates_cells(backend, key, store) -> None:
    """Cells written one at a time build a table.

    Args:
        backend: pytest fixture - see :func:`backend_`.
        key: pytest fixture - see :func:`key_`.
        store: pytest fixture - see :func:`store_`.

    """
    age = store.put_blob(codec.encode(backend.encrypt(key, 5, 8)))
    salary = store.put_blob(codec.encode(backend.encrypt(key, 6, 32)))
    store.metadata_put(MetadataEntry("u", 3, "age", age, age, "bob"))
    store.metadata_put(MetadataEntry("u", 3, "salary", age, salary, "bob"))
    schema = store.schema("u")
    assert schema.column_names == ["age", "salary"]
    assert (schema.row_count, schema.next_row_id) == (1, 4)
    assert _decrypted(backend, key, store, "u") == [(3, [5, 6])]
    wrong = store.put_blob(codec.encode(backend.encrypt(key, 6, 8)))
    with pytest.raises(SchemaMismatchError):
        store.metadata_put(MetadataEntry("u", 3, "salary", age, wrong))


def test_overwrite_releases_old_blob(backend, key, table) -> None:
    """Replacing a cell drops the blob nothing references anymore.

    Args:
        backend: pytest fixture - see :func:`backend_`.
        key: pytest fixture - see :func:`key_`.
        table: pytest fixture - see :func:`table_`.

    """
    row_id = table.insert_row("t", _cells(backend, key, 1, 2))
    old = table.metadata_get("t", row_id, "salary")
    new = table.put_blob(codec.encode(backend.encrypt(key, 3, 32)))
    table.metadata_put(
        MetadataEntry("t", row_id, "salary", old.key_hash, new)
    )
    assert old.value_hash not in table.blobs
    assert table.schema("t").row_count == 1
    assert _decrypted(backend, key, table) == [(row_id, [1, 3])]


def test_delete_row(backend, key, table) -> None:
    """Deleted rows vanish, their blobs are released and ids move on.

    Args:
        backend: pytest fixture - see :func:`backend_`.
        key: pytest fixture - see :func:`key_`.
        table: pytest fixture - see :func:`table_`.

    """
    first = table.insert_row("t", _cells(backend, key, 1, 1))
    table.insert_row("t", _cells(backend, key, 2, 2))
    blob = table.metadata_get("t", first, "age").value_hash
    table.delete_row("t", first)
    assert blob not in table.blobs
    with pytest.raises(UnknownCellError):
        table.delete_row("t", first)
    assert table.insert_row("t", _cells(backend, key, 3, 3)) == 2
    assert [row_id for row_id, _ in _decrypted(backend, key, table)] == [1, 2]
    assert table.schema("t").row_count == 2


def test_interrupted_insert_leaves_no_row(
    backend, key, table, tmp_path, monkeypatch
) -> None:
    """A crash between the blob and metadata writes loses the row cleanly.

    Args:
        backend: pytest fixture - see :func:`backend_`.
        key: pytest fixture - see :func:`key_`.
        table: pytest fixture - see :func:`table_`.
        tmp_path: pytest fixture.
        monkeypatch: pytest fixture.

    """
    table.insert_row("t", _cells(backend, key, 1, 1))

    def crash(*args, **kwargs):
        raise OSError("power loss")

    monkeypatch.setattr(table.metadata, "write_batch", crash)
    with pytest.raises(OSError, match="power loss"):
        table.insert_row("t", _cells(backend, key, 2, 2))
    monkeypatch.undo()
    table.close()
    with HybridStore(tmp_path / "store", segment_size=64 * 1024) as reopened:
        assert reopened.schema("t").row_count == 1
        assert _decrypted(backend, key, reopened) == [(0, [1, 1])]
        assert len(reopened.blobs) == 2
        assert reopened.insert_row("t", _cells(backend, key, 3, 3)) == 1


def test_recover_drops_dangling_rows(backend, key, table) -> None:
    """Rows whose blobs are gone are removed on recovery.

    Args:
        backend: pytest fixture - see :func:`backend_`.
        key: pytest fixture - see :func:`key_`.
        table: pytest fixture - see :func:`table_`.

    """
    table.insert_row("t", _cells(backend, key, 1, 1))
    lost = table.insert_row("t", _cells(backend, key, 2, 2))
    table.blobs.delete_blob(table.metadata_get("t", lost, "salary").value_hash)
    with pytest.raises(CorruptionError):
        list(table.rows("t"))
    assert table.recover() == 1
    assert table.schema("t").row_count == 1
    assert _decrypted(backend, key, table) == [(0, [1, 1])]
    assert table.recover() == 0
    assert table.insert_row("t", _cells(backend, key, 3, 3)) == 2


def test_reopen(backend, key, table, tmp_path) -> None:
    """Tables and rows survive a restart.

    Args:
        backend: pytest fixture - see :func:`backend_`.
        key: pytest fixture - see :func:`key_`.
        table: pytest fixture - see :func:`table_`.
        tmp_path: pytest fixture.

    """
    table.insert_row("t", _cells(backend, key, 4, 5))
    table.close()
    with HybridStore(tmp_path / "store") as reopened:
        assert reopened.schema("t").owner_id == "alice"
        assert _decrypted(backend, key, reopened) == [(0, [4, 5])]


def test_key_hash_holds_a_reference(backend, key, store) -> None:
    """A blob used only as a row key outlives the cells' own values.

    Args:
        backend: pytest fixture - see :func:`backend_`.
        key: pytest fixture - see :func:`key_`.
        store: pytest fixture - see :func:`store_`.

    """
    row_key = store.put_blob(codec.encode(backend.encrypt(key, 9, 32)))
    value = store.put_blob(codec.encode(backend.encrypt(key, 5, 8)))
    store.metadata_put(MetadataEntry("u", 0, "age", row_key, value))
    newer = store.put_blob(codec.encode(backend.encrypt(key, 6, 8)))
    store.metadata_put(MetadataEntry("u", 0, "age", row_key, newer))
    assert value not in store.blobs
    assert row_key in store.blobs
    _assert_consistent(store)
    store.delete_row("u", 0)
    assert row_key not in store.blobs
    _assert_consistent(store)


def test_recover_collects_orphan_blobs(backend, key, table) -> None:
    """Blobs stored without a committed cell are deleted on recovery.

    Args:
        backend: pytest fixture - see :func:`backend_`.
        key: pytest fixture - see :func:`key_`.
        table: pytest fixture - see :func:`table_`.

    """
    table.insert_row("t", _cells(backend, key, 1, 1))
    orphan = table.put_blob(codec.encode(backend.encrypt(key, 2, 8)))
    assert table.recover() == 0
    assert orphan not in table.blobs
    assert _decrypted(backend, key, table) == [(0, [1, 1])]
    _assert_consistent(table)


def _assert_consistent(store: HybridStore) -> None:
    refs: Counter = Counter()
    for _, raw in store.metadata.scan_prefix(CELL_PREFIX):
        entry = MetadataEntry.from_bytes(raw)
        for digest in entry.hashes:
            assert digest in store.blobs, entry
            refs[digest] += 1
    stored = {
        bytes.fromhex(name[len(REFS_PREFIX) :]): int(raw)
        for name, raw in store.metadata.scan_prefix(REFS_PREFIX)
    }
    assert stored == dict(refs)
    assert set(store.blobs.hashes()) == set(refs)


@pytest.mark.parametrize("seed", range(8))
def test_random_operations_keep_indirection(
    backend, key, tmp_path, seed
) -> None:
    """Every cell resolves and every reference count is exact.

    Random inserts, deletes, compactions, recoveries and restarts are
    applied to small segments and checked against a plain dict.

    Args:
        backend: pytest fixture - see :func:`backend_`.
        key: pytest fixture - see :func:`key_`.
        tmp_path: pytest fixture.
        seed: rng seed.

    """
    rng = random.Random(seed)
    root = tmp_path / "store"
    options = {"segment_size": 1024, "compaction_threshold": 0.3}
    store = HybridStore(root, **options)
    store.ensure_table("t", COLUMNS)
    expected = {}
    try:
        for _ in range(60):
            action = rng.choices(
                ["insert", "delete", "compact", "recover", "reopen"],
                weights=[6, 3, 2, 1, 1],
            )[0]
            if action == "insert":
                age, salary = rng.randrange(256), rng.randrange(2**32)
                row_id = store.insert_row(
                    "t", _cells(backend, key, age, salary)
                )
                expected[row_id] = [age, salary]
            elif action == "delete" and expected:
                row_id = rng.choice(sorted(expected))
                store.delete_row("t", row_id)
                del expected[row_id]
            elif action == "compact":
                store.compact()
            elif action == "recover":
                assert store.recover() == 0
            elif action == "reopen":
                store.close()
                store = HybridStore(root, **options)
            _assert_consistent(store)
        assert _decrypted(backend, key, store) == sorted(expected.items())
        assert store.schema("t").row_count == len(expected)
    finally:
        store.close()
