"""Pytest setup."""

from __future__ import annotations

import threading
import uuid
from pathlib import Path
from types import SimpleNamespace
from typing import Iterator

import pytest

from maskdb.auth.keyring import Keyring
from maskdb.auth.tokens import OwnerKeypair
from maskdb.cli.server import MaskdbServer
from maskdb.client.session import ClientSession
from maskdb.client.transport import LocalTransport
from maskdb.crypto.base import Backend
from maskdb.crypto.types import KeyMaterial
from maskdb.engine.executor import QueryEngine
from maskdb.event_stream.base import Backend as TranscriptStream
from maskdb.storage.hybrid import HybridStore

from tests.utils import compose
from tests.utils import EMPLOYEE_COLUMNS
from tests.utils import EMPLOYEE_ROWS
from tests.utils import wait_healthy


@pytest.fixture(name="backend")
def backend_() -> Backend:
    """Client-side simulated backend with deterministic randomness.

    Returns:
        The backend.

    """
    return Backend.from_name("sim", seed=0)


@pytest.fixture(name="key")
def key_(backend: Backend) -> KeyMaterial:
    """Owner key material, secret key included.

    Args:
        backend: pytest fixture - see :func:`backend_`.

    Returns:
        The key material.

    """
    return backend.keygen()


@pytest.fixture(name="keypair")
def keypair_() -> OwnerKeypair:
    """Owner signing key.

    Returns:
        A fresh keypair.

    """
    return OwnerKeypair.generate()


@pytest.fixture(name="store")
def store_(tmp_path: Path) -> Iterator[HybridStore]:
    """Hybrid store in a temporary directory.

    Args:
        tmp_path: pytest fixture.

    Yields:
        The opened store, closed afterwards.

    """
    store = HybridStore(tmp_path / "store", segment_size=64 * 1024)
    try:
        yield store
    finally:
        store.close()


@pytest.fixture(name="server_backend")
def server_backend_() -> Backend:
    """Backend the engine evaluates with; holds no secret key.

    Returns:
        The backend.

    """
    return Backend.from_name("sim", seed=1)


@pytest.fixture(name="engine")
def engine_(store: HybridStore, server_backend: Backend) -> QueryEngine:
    """Engine over the temporary store with its own transcript stream.

    Args:
        store: pytest fixture - see :func:`store_`.
        server_backend: pytest fixture - see :func:`server_backend_`.

    Returns:
        The engine.

    """
    stream = TranscriptStream.from_uri(
        f"memory://?stream=transcripts-{uuid.uuid4().hex}"
    )
    return QueryEngine(store, server_backend, Keyring(), transcripts=stream)


@pytest.fixture(name="session")
def session_(
    backend: Backend,
    key: KeyMaterial,
    keypair: OwnerKeypair,
    engine: QueryEngine,
) -> ClientSession:
    """Registered owner session talking to the engine in-process.

    Args:
        backend: pytest fixture - see :func:`backend_`.
        key: pytest fixture - see :func:`key_`.
        keypair: pytest fixture - see :func:`keypair_`.
        engine: pytest fixture - see :func:`engine_`.

    Returns:
        The session.

    """
    session = ClientSession.for_owner(
        backend, key, LocalTransport(engine), keypair
    )
    session.register()
    return session


@pytest.fixture(name="employees")
def employees_(session: ClientSession) -> ClientSession:
    """Session whose server holds the ``employees`` table.

    Args:
        session: pytest fixture - see :func:`session_`.

    Returns:
        The same session.

    """
    session.insert("employees", EMPLOYEE_COLUMNS, EMPLOYEE_ROWS)
    return session


@pytest.fixture(name="server")
def server_(engine: QueryEngine) -> Iterator[MaskdbServer]:
    """Serve the engine on a free local port from a background thread.

    Args:
        engine: pytest fixture - see :func:`engine_`.

    Yields:
        The running server.

    """
    server = MaskdbServer(("127.0.0.1", 0), engine, max_frame=1 << 20)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield server
    finally:
        server.shutdown()
        server.server_close()
        thread.join(timeout=5)


@pytest.fixture
def setup_backend(request) -> Iterator[SimpleNamespace]:
    """Start the compose service a transcript stream uri points at.

    Args:
        request: indirect parametrization; `param` is a
            ``(uri, timeout_sec)`` pair. ``memory://`` uris need no
            service.

    Yields:
        Namespace whose `uri` attribute is the stream uri.

    """
    uri, timeout_sec = request.param
    service = uri.partition("://")[0]
    remote = service != "memory"
    if remote:
        compose("up", "-d", service)
        wait_healthy(service, timeout_sec)
    try:
        yield SimpleNamespace(uri=uri)
    finally:
        if remote:
            compose("down")
