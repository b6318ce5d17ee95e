"""Client-server wire format.

A frame is a 4-byte big-endian length followed by that many payload
bytes. Payloads are JSON messages; ciphertexts travel base64-encoded in
an ``attachments`` list and the body refers to them by index.

"""
from __future__ import annotations

import base64
import binascii
import json
import struct
from dataclasses import dataclass
from dataclasses import field
from typing import Any
from typing import BinaryIO
from typing import Dict
from typing import List
from typing import Optional
from typing import Sequence

from maskdb.crypto import codec
from maskdb.crypto.types import Ciphertext
from maskdb.engine.executor import EncryptedResult
from maskdb.exceptions import CorruptCiphertextError
from maskdb.exceptions import FrameError
from maskdb.exceptions import MaskdbError
from maskdb.exceptions import ResultFormatError

PROTOCOL_VERSION = 1
REQUEST_KINDS = ("query", "pir_lookup", "insert", "admin")
DEFAULT_MAX_FRAME = 64 * 1024 * 1024

_LENGTH = struct.Struct(">I")
_DISCARD_CHUNK = 1024 * 1024


def _read_exact(stream: BinaryIO, size: int) -> bytes:
    data = stream.read(size)
    if data is None or len(data) != size:
        raise EOFError(f"Stream closed after {len(data or b'')}/{size} bytes")
    return data


def write_frame(
    stream: BinaryIO, payload: bytes, max_frame: int = DEFAULT_MAX_FRAME
) -> None:
    """Send one frame.

    Args:
        stream: writable binary stream.
        payload: message bytes.
        max_frame: largest payload allowed.

    Raises:
        FrameError: payload larger than `max_frame`.

    """
    if len(payload) > max_frame:
        raise FrameError(
            f"Frame of {len(payload)} bytes exceeds limit of {max_frame}"
        )
    stream.write(_LENGTH.pack(len(payload)) + payload)
    stream.flush()


def read_frame(
    stream: BinaryIO, max_frame: int = DEFAULT_MAX_FRAME
) -> Optional[bytes]:
    """Receive one frame.

    An oversized frame is drained before failing, so the stream stays
    aligned on frame boundaries.

    Args:
        stream: readable binary stream.
        max_frame: largest payload accepted.

    Returns:
        The payload, or ``None`` on a clean end of stream.

    Raises:
        FrameError: payload larger than `max_frame`.
        EOFError: stream closed mid-frame.

    """
    header = stream.read(_LENGTH.size)
    if not header:
        return None
    if len(header) != _LENGTH.size:
        raise EOFError("Stream closed inside a frame header")
    (length,) = _LENGTH.unpack(header)
    if length > max_frame:
        remaining = length
        while remaining:
            remaining -= len(
                _read_exact(stream, min(remaining, _DISCARD_CHUNK))
            )
        raise FrameError(
            f"Frame of {length} bytes exceeds limit of {max_frame}"
        )
    return _read_exact(stream, length)


def _load(payload: bytes) -> Dict[str, Any]:
    try:
        data = json.loads(payload)
    except (UnicodeDecodeError, ValueError) as exc:
        raise FrameError(f"Message is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise FrameError("Message must be a JSON object")
    return data


def _attachments_from(raw: Any) -> List[bytes]:
    if not isinstance(raw, list):
        raise FrameError("'attachments' must be a list")
    try:
        return [base64.b64decode(item, validate=True) for item in raw]
    except (binascii.Error, TypeError, ValueError) as exc:
        raise FrameError("Attachment is not valid base64") from exc


class Attachments:
    """Collects ciphertexts while a body is being built."""

    def __init__(self) -> None:  # noqa: D107
        self.blobs: List[bytes] = []

    def add(self, ct: Ciphertext) -> int:
        """Attach a ciphertext.

        Args:
            ct: ciphertext to send.

        Returns:
            Its index, to be referenced from the body.

        """
        self.blobs.append(codec.encode(ct))
        return len(self.blobs) - 1

    def add_all(self, cts: Sequence[Ciphertext]) -> List[int]:  # noqa: D102
        return [self.add(ct) for ct in cts]


@dataclass(frozen=True)
class Request:
    """``(kind, token, body)`` sent by a client."""

    kind: str
    body: Dict[str, Any]
    token: Optional[str] = None
    attachments: List[bytes] = field(default_factory=list, repr=False)
    version: int = PROTOCOL_VERSION

    def __post_init__(self) -> None:
        if self.version != PROTOCOL_VERSION:
            raise FrameError(f"Unsupported protocol version {self.version}")
        if self.kind not in REQUEST_KINDS:
            raise FrameError(f"Unknown request kind '{self.kind}'")
        if not isinstance(self.body, dict):
            raise FrameError("Request body must be an object")

    def ciphertext(self, index: Any) -> Ciphertext:
        """Resolve an attachment index from the body.

        Args:
            index: value found in the body.

        Returns:
            The attached ciphertext.

        Raises:
            FrameError: no such attachment, or it is not FHEC.

        """
        return _resolve(self.attachments, index)

    def to_bytes(self) -> bytes:  # noqa: D102
        return json.dumps(
            {
                "version": self.version,
                "kind": self.kind,
                "token": self.token,
                "body": self.body,
                "attachments": _b64_all(self.attachments),
            },
            separators=(",", ":"),
        ).encode("utf-8")

    @classmethod
    def from_bytes(cls, payload: bytes) -> Request:
        """Parse a request payload.

        Args:
            payload: frame payload.

        Returns:
            The request.

        Raises:
            FrameError: not a well-formed request.

        """
        data = _load(payload)
        token = data.get("token")
        if token is not None and not isinstance(token, str):
            raise FrameError("'token' must be a string")
        return cls(
            kind=data.get("kind", ""),
            body=data.get("body", {}),
            token=token,
            attachments=_attachments_from(data.get("attachments", [])),
            version=data.get("version", PROTOCOL_VERSION),
        )


@dataclass(frozen=True)
class Response:
    """Server answer; ``error`` is set when ``status`` is ``"error"``."""

    status: str = "ok"
    body: Dict[str, Any] = field(default_factory=dict)
    error: Optional[Dict[str, str]] = None
    row_count: Optional[int] = None
    transcript_id: Optional[str] = None
    attachments: List[bytes] = field(default_factory=list, repr=False)

    @classmethod
    def failure(cls, exc: BaseException) -> Response:
        """Error response for an exception.

        Args:
            exc: the failure; non-maskdb errors are reported as internal.

        Returns:
            The response.

        """
        if isinstance(exc, MaskdbError):
            kind, message = exc.kind, str(exc)
        else:
            kind, message = "internal", "Internal error"
        return cls(
            status="error", error={"kind": kind, "message": message}
        )

    @property
    def ok(self) -> bool:  # noqa: D102
        return self.status == "ok"

    def ciphertext(self, index: Any) -> Ciphertext:  # noqa: D102
        return _resolve(self.attachments, index)

    def to_bytes(self) -> bytes:  # noqa: D102
        message: Dict[str, Any] = {"status": self.status, "body": self.body}
        if self.error is not None:
            message["error"] = self.error
        if self.row_count is not None:
            message["row_count"] = self.row_count
        if self.transcript_id is not None:
            message["transcript_id"] = self.transcript_id
        message["attachments"] = _b64_all(self.attachments)
        return json.dumps(message, separators=(",", ":")).encode("utf-8")

    @classmethod
    def from_bytes(cls, payload: bytes) -> Response:
        """Parse a response payload.

        Args:
            payload: frame payload.

        Returns:
            The response.

        Raises:
            FrameError: not a well-formed response.

        """
        data = _load(payload)
        status = data.get("status")
        if status not in ("ok", "error"):
            raise FrameError(f"Bad response status {status!r}")
        error = data.get("error")
        if status == "error" and not isinstance(error, dict):
            raise FrameError("Error response without an error object")
        return cls(
            status=status,
            body=data.get("body", {}),
            error=error,
            row_count=data.get("row_count"),
            transcript_id=data.get("transcript_id"),
            attachments=_attachments_from(data.get("attachments", [])),
        )


def _b64_all(blobs: Sequence[bytes]) -> List[str]:
    return [base64.b64encode(blob).decode("ascii") for blob in blobs]


def _resolve(blobs: Sequence[bytes], index: Any) -> Ciphertext:
    if not isinstance(index, int) or isinstance(index, bool):
        raise FrameError(f"Attachment index must be an int, got {index!r}")
    if not 0 <= index < len(blobs):
        raise FrameError(
            f"Attachment {index} missing, message has {len(blobs)}"
        )
    try:
        return codec.decode(blobs[index])
    except CorruptCiphertextError as exc:
        raise FrameError(f"Attachment {index}: {exc}") from exc


def result_response(result: EncryptedResult) -> Response:
    """Pack an engine result.

    Args:
        result: masked rows and optional mask.

    Returns:
        The response; cells and mask bits become attachments.

    """
    attachments = Attachments()
    body: Dict[str, Any] = {
        "columns": list(result.columns),
        "rows": [attachments.add_all(row) for row in result.rows],
        "mask": (
            None
            if result.mask is None
            else attachments.add_all(result.mask)
        ),
        "scanned": result.scanned,
    }
    return Response(
        body=body,
        row_count=result.row_count,
        transcript_id=result.transcript_id,
        attachments=attachments.blobs,
    )


def result_from_response(response: Response) -> EncryptedResult:
    """Unpack :func:`result_response`.

    Args:
        response: successful query or lookup response.

    Returns:
        The encrypted result.

    Raises:
        FrameError: body references missing attachments.
        ResultFormatError: row count or shapes are inconsistent.

    """
    body = response.body
    try:
        rows = tuple(
            tuple(response.ciphertext(index) for index in row)
            for row in body["rows"]
        )
        mask = body.get("mask")
        result = EncryptedResult(
            columns=tuple(body["columns"]),
            rows=rows,
            mask=(
                None
                if mask is None
                else tuple(response.ciphertext(index) for index in mask)
            ),
            scanned=int(body.get("scanned", len(rows))),
            transcript_id=response.transcript_id,
        )
    except (KeyError, TypeError) as exc:
        raise FrameError(f"Malformed result body: {exc}") from exc
    if response.row_count is not None and response.row_count != len(rows):
        raise ResultFormatError(
            f"Server announced {response.row_count} rows, sent {len(rows)}"
        )
    return result
