"""Where leakage transcripts are posted, chosen by uri scheme."""
from __future__ import annotations

import abc
import importlib
from typing import Any
from typing import Dict
from typing import List
from typing import Type
from urllib.parse import parse_qs
from urllib.parse import urlencode
from urllib.parse import urlsplit

from maskdb.exceptions import BackendUnavailableError

StreamUri = str
Transcript = Dict[str, Any]


class Backend(abc.ABC):
    """Transcript sink that can also hand transcripts back for audits.

    Subclasses live in a module named after their uri scheme, so
    ``redis://localhost:6379?stream=audit`` loads
    :mod:`maskdb.event_stream.redis`.

    """

    def __init__(self, uri: StreamUri) -> None:
        """Split the uri and connect.

        Args:
            uri: connection string; its ``stream`` query parameter names
                the stream, the remaining parameters stay in `query`.

        Raises:
            ValueError: the uri has no ``stream`` parameter.

        """
        parts = urlsplit(uri)
        self.query: Dict[str, List[str]] = parse_qs(parts.query)
        streams = self.query.pop("stream", None)
        if not streams:
            raise ValueError(f"Missing 'stream' in '{uri}'")
        self.stream = streams[0]
        rest = urlencode(self.query, doseq=True)
        self.uri = f"{parts.scheme}://{parts.netloc}{parts.path}"
        if rest:
            self.uri += f"?{rest}"
        self.connect()

    @classmethod
    def from_uri(cls: Type[Backend], uri: StreamUri) -> Backend:
        """Instantiate the backend registered for the uri scheme.

        Args:
            uri: connection string.

        Returns:
            A connected backend.

        Raises:
            BackendUnavailableError: unknown scheme, or its client
                library is not installed.

        """
        scheme = urlsplit(uri).scheme
        try:
            module = importlib.import_module(f"{__package__}.{scheme}")
        except ImportError as exc:
            raise BackendUnavailableError(
                f"No transcript stream for scheme '{scheme}': {exc}"
            ) from exc
        return module.Backend(uri=uri)

    @abc.abstractmethod
    def connect(self) -> None:
        """Ensure internal connection to the remote service is ok."""

    @abc.abstractmethod
    def post(self, data: Transcript) -> str:
        """Store one transcript.

        Args:
            data: JSON-serializable transcript.

        Returns:
            The id to fetch it back with.

        """

    @abc.abstractmethod
    def get(self, transcript_id: str) -> Transcript:
        """Fetch a transcript by id.

        Args:
            transcript_id: value returned by :meth:`post`.

        Returns:
            The transcript.

        Raises:
            UnknownTranscriptError: no such id.

        """

    def close(self) -> None:
        """Release client resources."""
