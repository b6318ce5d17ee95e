"""Ways for a client session to reach a server."""
from __future__ import annotations

import abc
import logging
import socket
import threading
from typing import BinaryIO
from typing import Optional
from typing import Tuple

from maskdb.cli.server import RequestRouter
from maskdb.cli.wire import DEFAULT_MAX_FRAME
from maskdb.cli.wire import read_frame
from maskdb.cli.wire import Request
from maskdb.cli.wire import Response
from maskdb.cli.wire import write_frame
from maskdb.engine.executor import QueryEngine
from maskdb.exceptions import error_from_kind
from maskdb.exceptions import FrameError
from maskdb.exceptions import TransportError

logger = logging.getLogger(__name__)


class Transport(abc.ABC):
    """Send a request, get the response or the server's error."""

    def call(self, request: Request) -> Response:
        """Round trip one request.

        Args:
            request: message to send.

        Returns:
            The successful response.

        Raises:
            TransportError: the server could not be reached.
            MaskdbError: the server answered with an error; the class
                matches the error kind.

        """
        response = Response.from_bytes(self.exchange(request.to_bytes()))
        if not response.ok:
            error = response.error or {}
            raise error_from_kind(
                str(error.get("kind", "internal")),
                str(error.get("message", "")),
            )
        return response

    @abc.abstractmethod
    def exchange(self, payload: bytes) -> bytes:
        """Send a request payload and wait for the response payload."""

    def close(self) -> None:  # noqa: D102
        pass

    def __enter__(self) -> Transport:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class SocketTransport(Transport):
    """Framed messages over one TCP connection, opened lazily."""

    def __init__(
        self,
        address: Tuple[str, int],
        timeout: Optional[float] = 60.0,
        max_frame: int = DEFAULT_MAX_FRAME,
    ) -> None:
        """Remember where the server is.

        Args:
            address: (host, port) of the server.
            timeout: socket timeout in seconds.
            max_frame: largest frame sent or accepted.

        """
        self.address = address
        self.timeout = timeout
        self.max_frame = max_frame
        self._sock: Optional[socket.socket] = None
        self._rfile: Optional[BinaryIO] = None
        self._wfile: Optional[BinaryIO] = None
        self._lock = threading.Lock()

    def connect(self) -> None:
        """Open the connection.

        Raises:
            TransportError: the server is unreachable.

        """
        try:
            self._sock = socket.create_connection(
                self.address, timeout=self.timeout
            )
        except OSError as exc:
            raise TransportError(
                "Unable to reach server at %s:%s: %s" % (*self.address, exc)
            ) from exc
        self._rfile = self._sock.makefile("rb")
        self._wfile = self._sock.makefile("wb")
        logger.debug("Connected to %s:%s", *self.address)

    def exchange(self, payload: bytes) -> bytes:  # noqa: D102
        with self._lock:
            if self._sock is None:
                self.connect()
            rfile, wfile = self._rfile, self._wfile
            try:
                write_frame(wfile, payload, self.max_frame)  # type: ignore
                answer = read_frame(rfile, self.max_frame)  # type: ignore
            except (OSError, EOFError) as exc:
                self._disconnect()
                raise TransportError(f"Connection lost: {exc}") from exc
            except FrameError:
                self._disconnect()
                raise
            if answer is None:
                self._disconnect()
                raise TransportError("Server closed the connection")
            return answer

    def _disconnect(self) -> None:
        for stream in (self._rfile, self._wfile, self._sock):
            if stream is not None:
                try:
                    stream.close()
                except OSError:
                    pass
        self._sock = self._rfile = self._wfile = None

    def close(self) -> None:  # noqa: D102
        with self._lock:
            self._disconnect()


class LocalTransport(Transport):
    """Serve requests in-process, through the same message encoding."""

    def __init__(self, engine: QueryEngine) -> None:  # noqa: D107
        self.router = RequestRouter(engine)

    def exchange(self, payload: bytes) -> bytes:  # noqa: D102
        return self.router.handle(payload).to_bytes()
