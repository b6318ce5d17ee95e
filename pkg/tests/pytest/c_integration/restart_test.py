"""Server restarts keep tables, owners and deletions."""
from __future__ import annotations

import contextlib
import threading
import uuid
from typing import Iterator

from maskdb.cli.server import MaskdbServer
from maskdb.client.session import ClientSession
from maskdb.client.transport import SocketTransport
from maskdb.config import Settings

from tests.utils import EMPLOYEE_COLUMNS
from tests.utils import EMPLOYEE_ROWS


@contextlib.contextmanager
def running(settings: Settings) -> Iterator[MaskdbServer]:
    """Serve from a background thread until the block exits.

    Args:
        settings: server configuration.

    Yields:
        The running server.

    """
    server = MaskdbServer.from_settings(settings)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield server
    finally:
        server.shutdown()
        server.server_close()
        thread.join(timeout=5)


def _session(server, backend, key, keypair) -> ClientSession:
    transport = SocketTransport(server.server_address[:2], timeout=30)
    return ClientSession.for_owner(backend, key, transport, keypair)


def test_restart_keeps_state(tmp_path, backend, key, keypair) -> None:
    """Rows, deletions and registered owners survive a restart.

    Args:
        tmp_path: pytest fixture.
        backend: pytest fixture - see :func:`backend_`.
        key: pytest fixture - see :func:`key_`.
        keypair: pytest fixture - see :func:`keypair_`.

    """
    settings = Settings(
        listen="127.0.0.1:0",
        data_dir=tmp_path,
        segment_size=4096,
        transcript_uri=f"memory://?stream=restart-{uuid.uuid4().hex}",
        seed=5,
    )
    with running(settings) as server:
        with _session(server, backend, key, keypair) as session:
            session.register()
            session.insert("employees", EMPLOYEE_COLUMNS, EMPLOYEE_ROWS)
            session.delete_row("employees", 1)
            before = list(session.execute("SELECT * FROM employees"))
    assert (tmp_path / "keys" / "owners.json").exists()

    with running(settings) as server:
        with _session(server, backend, key, keypair) as session:
            schema = session.schema("employees")
            assert schema.row_count == len(EMPLOYEE_ROWS) - 1
            assert schema.next_row_id == len(EMPLOYEE_ROWS)
            assert list(session.execute("SELECT * FROM employees")) == before
            assert session.insert("employees", EMPLOYEE_COLUMNS, [(1, 1)]) == [
                len(EMPLOYEE_ROWS)
            ]
            rows = session.execute("SELECT age FROM employees WHERE age < 20")
            assert list(rows) == [(18,), (1,)]
