"""Log-backed transcript stream, one JSON object per line."""

from __future__ import annotations

import json
import uuid
from pathlib import Path

from maskdb.event_stream.base import Backend as Base
from maskdb.event_stream.base import Transcript
from maskdb.exceptions import UnknownTranscriptError
from maskdb.utils.logs import DumpLogger
from maskdb.utils.logs import make_logger


class Backend(Base):
    """Dump transcripts through a :class:`DumpLogger`.

    ``log://?stream=stdout`` and ``log://?stream=stderr`` are write-only;
    with a file or directory path transcripts can be read back by id.

    """

    _logger: DumpLogger | None = None

    @property
    def logger(self) -> DumpLogger:
        """Internal logger lazy-loader.

        Returns:
            Initialized logger.

        """
        if self._logger is None:
            self.connect()
        return self._logger  # type: ignore

    def connect(self) -> None:
        """Attach a dump logger to the destination."""
        self.destination = (
            self.stream
            if self.stream in ("stdout", "stderr")
            else Path(self.stream)
        )
        self._logger = make_logger(
            f"{__name__}.{self.stream}", self.destination
        )

    @property
    def logfile(self) -> Path | None:
        """File the transcripts land in, if any."""
        if not isinstance(self.destination, Path):
            return None
        if self.destination.is_dir():
            return self.destination / "transcripts.jsonl"
        return self.destination

    def post(self, data: Transcript) -> str:  # noqa: D102
        transcript_id = uuid.uuid4().hex
        self.logger.json({"id": transcript_id, "transcript": data})
        for handler in self.logger.handlers:
            handler.flush()
        return transcript_id

    def get(self, transcript_id: str) -> Transcript:  # noqa: D102
        logfile = self.logfile
        if logfile is not None and logfile.exists():
            with logfile.open() as lines:
                for line in lines:
                    record = json.loads(line)
                    if record.get("id") == transcript_id:
                        return record["transcript"]
        raise UnknownTranscriptError(
            f"No readable transcript '{transcript_id}' in '{self.stream}'"
        )
