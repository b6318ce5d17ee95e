"""Memory-backed transcript stream."""

from __future__ import annotations

import itertools
import threading
from collections import OrderedDict
from typing import Callable
from typing import Dict

from maskdb.event_stream.base import Backend as Base
from maskdb.event_stream.base import Transcript
from maskdb.exceptions import UnknownTranscriptError

STORAGE: Dict[str, OrderedDict] = {}
_COUNTERS: Dict[str, itertools.count] = {}
_LOCK = threading.Lock()


class Backend(Base):
    """Keep transcripts in a process-wide ordered dict per stream.

    Nothing is ever evicted unless ``maxlen`` is set in the uri, eg
    ``memory://?stream=transcripts&maxlen=10000``.

    """

    _store: OrderedDict | None = None
    _store_constructor: Callable = OrderedDict

    @property
    def store(self) -> OrderedDict:
        """Internal container lazy-loader.

        Returns:
            Initialized container.

        """
        if self._store is None:
            self.connect()
        return self._store  # type: ignore

    def connect(self) -> None:
        """Fetch the stream-specific container from the global one."""
        with _LOCK:
            self._store = STORAGE.setdefault(
                self.stream, self._store_constructor()
            )
            self._counter = _COUNTERS.setdefault(
                self.stream, itertools.count()
            )
        maxlen = self.query.get("maxlen")
        self.maxlen = int(maxlen[0]) if maxlen else None

    def post(self, data: Transcript) -> str:  # noqa: D102
        with _LOCK:
            transcript_id = f"{next(self._counter)}"
            self.store[transcript_id] = data
            while self.maxlen is not None and len(self.store) > self.maxlen:
                self.store.popitem(last=False)
        return transcript_id

    def get(self, transcript_id: str) -> Transcript:  # noqa: D102
        with _LOCK:
            try:
                return self.store[transcript_id]
            except KeyError:
                raise UnknownTranscriptError(
                    f"No transcript '{transcript_id}' in '{self.stream}'"
                ) from None
