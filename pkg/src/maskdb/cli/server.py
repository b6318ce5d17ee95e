"""Framed TCP server exposing a :class:`QueryEngine`."""
from __future__ import annotations

import base64
import logging
import socketserver
from typing import Any
from typing import Callable
from typing import Dict
from typing import Tuple

from maskdb.auth.tokens import DelegationToken
from maskdb.cli.wire import read_frame
from maskdb.cli.wire import Request
from maskdb.cli.wire import Response
from maskdb.cli.wire import result_response
from maskdb.cli.wire import write_frame
from maskdb.config import Settings
from maskdb.crypto.types import KeyMaterial
from maskdb.engine.executor import QueryEngine
from maskdb.exceptions import FrameError
from maskdb.exceptions import MaskdbError
from maskdb.exceptions import TokenFormatError
from maskdb.types import ColumnDef

logger = logging.getLogger(__name__)

Handler = Callable[[Request], Response]


def _field(body: Dict[str, Any], name: str, kind: type) -> Any:
    value = body.get(name)
    is_bool = isinstance(value, bool)
    if not isinstance(value, kind) or (is_bool and kind is not bool):
        raise FrameError(f"Body field '{name}' must be {kind.__name__}")
    return value


def _b64_field(body: Dict[str, Any], name: str) -> bytes:
    try:
        return base64.b64decode(_field(body, name, str), validate=True)
    except ValueError as exc:
        raise FrameError(f"Body field '{name}' is not base64") from exc


class RequestRouter:
    """Turn request payloads into response payloads."""

    def __init__(self, engine: QueryEngine) -> None:  # noqa: D107
        self.engine = engine
        self._actions: Dict[str, Handler] = {
            "register": self._register,
            "catalog": self._catalog,
            "transcript": self._transcript,
            "compact": self._compact,
            "delete_row": self._delete_row,
            "stats": self._stats,
        }

    def handle(self, payload: bytes) -> Response:
        """Process one request; failures become error responses.

        Args:
            payload: request frame payload.

        Returns:
            The response to send back.

        """
        try:
            request = Request.from_bytes(payload)
            return getattr(self, f"_{request.kind}")(request)
        except MaskdbError as exc:
            logger.info("Request failed with %s: %s", exc.kind, exc)
            return Response.failure(exc)
        except Exception as exc:  # noqa: B902
            logger.exception("Unexpected failure while handling a request")
            return Response.failure(exc)

    @staticmethod
    def _token(request: Request) -> DelegationToken:
        if request.token is None:
            raise TokenFormatError("Request carries no token")
        return DelegationToken.from_b64(request.token)

    def _query(self, request: Request) -> Response:
        query = _field(request.body, "query", str)
        return result_response(
            self.engine.process_query(query, self._token(request))
        )

    def _pir_lookup(self, request: Request) -> Response:
        body = request.body
        result = self.engine.pir_lookup(
            request.ciphertext(body.get("key")),
            _field(body, "table", str),
            self._token(request),
            aggregate=bool(body.get("aggregate", False)),
        )
        return result_response(result)

    def _insert(self, request: Request) -> Response:
        body = request.body
        try:
            columns = [
                ColumnDef(column["name"], int(column["width"]))
                for column in _field(body, "columns", list)
            ]
        except (KeyError, TypeError) as exc:
            raise FrameError(f"Malformed column list: {exc}") from exc
        rows = [
            [request.ciphertext(index) for index in row]
            for row in _field(body, "rows", list)
        ]
        row_ids = self.engine.insert(
            _field(body, "table", str), columns, rows, self._token(request)
        )
        return Response(body={"row_ids": row_ids}, row_count=len(row_ids))

    def _admin(self, request: Request) -> Response:
        action = request.body.get("action")
        handler = self._actions.get(action)  # type: ignore
        if handler is None:
            raise FrameError(f"Unknown admin action {action!r}")
        return handler(request)

    def _register(self, request: Request) -> Response:
        body = request.body
        key_material = body.get("key_material")
        owner_id = self.engine.register_owner(
            _b64_field(body, "verification_key"),
            None
            if key_material is None
            else KeyMaterial.from_dict(key_material),
            _b64_field(body, "proof"),
        )
        return Response(body={"owner_id": owner_id})

    def _catalog(self, request: Request) -> Response:
        tables = self.engine.catalog(self._token(request))
        return Response(
            body={
                "tables": {
                    name: schema.to_dict() for name, schema in tables.items()
                }
            }
        )

    def _transcript(self, request: Request) -> Response:
        transcript = self.engine.transcript(
            _field(request.body, "id", str), self._token(request)
        )
        return Response(body={"transcript": transcript.to_dict()})

    def _compact(self, request: Request) -> Response:
        reclaimed = self.engine.compact(self._token(request))
        return Response(body={"reclaimed": reclaimed})

    def _delete_row(self, request: Request) -> Response:
        body = request.body
        self.engine.delete_row(
            _field(body, "table", str),
            _field(body, "row_id", int),
            self._token(request),
        )
        return Response()

    def _stats(self, request: Request) -> Response:
        return Response(body=self.engine.stats(self._token(request)))


class _ConnectionHandler(socketserver.StreamRequestHandler):
    """Serve framed requests on one connection, in order."""

    server: MaskdbServer

    def handle(self) -> None:
        peer = "%s:%s" % self.client_address[:2]
        logger.debug("Connection from %s", peer)
        max_frame = self.server.max_frame
        while True:
            try:
                payload = read_frame(self.rfile, max_frame)
            except FrameError as exc:
                response = Response.failure(exc)
            except (EOFError, ConnectionError):
                break
            else:
                if payload is None:
                    break
                response = self.server.router.handle(payload)
            raw = response.to_bytes()
            if len(raw) > max_frame:
                raw = Response.failure(
                    FrameError("Response exceeds the frame limit")
                ).to_bytes()
            try:
                write_frame(self.wfile, raw, max_frame)
            except ConnectionError:
                break
        logger.debug("Connection from %s closed", peer)


class MaskdbServer(socketserver.ThreadingTCPServer):
    """One thread per connection over a shared engine."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(
        self,
        address: Tuple[str, int],
        engine: QueryEngine,
        max_frame: int,
    ) -> None:
        """Bind the listening socket.

        Args:
            address: (host, port); port 0 picks a free one.
            engine: the engine requests run against.
            max_frame: largest frame accepted or sent.

        """
        self.engine = engine
        self.router = RequestRouter(engine)
        self.max_frame = max_frame
        super().__init__(address, _ConnectionHandler)

    @classmethod
    def from_settings(
        cls, settings: Settings, engine: QueryEngine | None = None
    ) -> MaskdbServer:
        """Open storage and bind as configured.

        Args:
            settings: server configuration.
            engine: overrides the engine built from `settings`.

        Returns:
            The bound, not yet serving, server.

        """
        engine = engine or QueryEngine.from_settings(settings)
        server = cls(settings.address, engine, settings.max_frame)
        catalog = engine.store.catalog()
        logger.info(
            "Serving %d tables (%d rows) on %s:%d with the '%s' backend",
            len(catalog),
            sum(schema.row_count for schema in catalog.values()),
            *server.server_address[:2],
            engine.backend.name,
        )
        return server

    def server_close(self) -> None:  # noqa: D102
        super().server_close()
        self.engine.close()
