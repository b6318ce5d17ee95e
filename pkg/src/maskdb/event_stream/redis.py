"""Redis-backed transcript stream."""

from __future__ import annotations

import json

from redis import Redis

from maskdb.event_stream.base import Backend as Base
from maskdb.event_stream.base import Transcript
from maskdb.exceptions import UnknownTranscriptError


class Backend(Base):
    """Post with :meth:`Redis.xadd`, read back with :meth:`Redis.xrange`."""

    _client: Redis | None = None

    @property
    def client(self) -> Redis:
        """Redis client lazy-loader.

        Returns:
            Initialized client, guaranteed to be ping-connected.

        """
        if not self._client:
            self.connect()
        return self._client  # type: ignore

    def connect(self) -> None:
        """Instantiate a Redis client and ping it."""
        self._client = Redis.from_url(self.uri)
        self._client.ping()

    def post(self, data: Transcript) -> str:  # noqa: D102
        entry_id = self.client.xadd(
            self.stream, fields={"data": json.dumps(data)}
        )
        return entry_id.decode() if isinstance(entry_id, bytes) else entry_id

    def get(self, transcript_id: str) -> Transcript:  # noqa: D102
        entries = self.client.xrange(
            self.stream, min=transcript_id, max=transcript_id, count=1
        )
        if not entries:
            raise UnknownTranscriptError(
                f"No transcript '{transcript_id}' in '{self.stream}'"
            )
        _, fields = entries[0]
        return json.loads(fields[b"data"])

    def close(self) -> None:  # noqa: D102
        if self._client is not None:
            self._client.close()
            self._client = None
