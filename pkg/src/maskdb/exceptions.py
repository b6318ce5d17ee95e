"""Custom exceptions for maskdb.

Every error carries a stable ``kind`` string. The server sends the kind
over the wire and the client maps it back to the same class with
:func:`error_from_kind`.

"""
from __future__ import annotations

from typing import Dict
from typing import Optional
from typing import Type


class MaskdbError(Exception):
    """Base class for every maskdb failure."""

    kind = "internal"


# crypto


class UnsupportedParameterError(MaskdbError):
    """Security parameter not supported by the backend."""

    kind = "unsupported_parameter"


class OutOfRangeError(MaskdbError):
    """Plaintext value does not fit its bit-width."""

    kind = "out_of_range"


class WidthMismatchError(MaskdbError):
    """Operands of a homomorphic operator have different widths."""

    kind = "width_mismatch"


class KeyMismatchError(MaskdbError):
    """Ciphertext was produced under a different key."""

    kind = "key_mismatch"


class CorruptCiphertextError(MaskdbError):
    """Ciphertext bytes fail integrity checks."""

    kind = "corrupt_ciphertext"


class BackendUnavailableError(MaskdbError):
    """Requested homomorphic backend cannot be loaded."""

    kind = "backend_unavailable"


# sql


class SqlSyntaxError(MaskdbError):
    """Query text does not follow the supported grammar."""

    kind = "sql_syntax"

    def __init__(self, message: str, position: int) -> None:
        """Attach the offending character offset to the message.

        Args:
            message: what went wrong.
            position: zero-based offset into the query text.

        """
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnsupportedSqlError(MaskdbError):
    """Query uses a construct outside the supported subset."""

    kind = "unsupported_sql"


class UnknownColumnError(MaskdbError):
    """Identifier does not resolve to a column of the table."""

    kind = "unknown_column"


class AstFormatError(MaskdbError):
    """Serialized query is malformed or has the wrong version."""

    kind = "ast_format"


# storage


class BlobNotFoundError(MaskdbError):
    """No live record for the requested hash."""

    kind = "blob_not_found"


class ChecksumError(MaskdbError):
    """Stored record does not match its checksum."""

    kind = "checksum"


class StorageFullError(MaskdbError):
    """Record cannot fit in a segment."""

    kind = "storage_full"


class UnknownTableError(MaskdbError):
    """Table is not in the catalog."""

    kind = "unknown_table"


class UnknownCellError(MaskdbError):
    """No metadata entry for the requested (table, row, column)."""

    kind = "unknown_cell"


class CorruptionError(MaskdbError):
    """Metadata references data missing from the blob store."""

    kind = "corruption"


# auth


class AuthorizationError(MaskdbError):
    """Base class for token and permission failures."""

    kind = "authorization"


class BadSignatureError(AuthorizationError):
    """A signature in the token chain does not verify."""

    kind = "bad_signature"


class TokenExpiredError(AuthorizationError):
    """Token is past its expiry."""

    kind = "token_expired"


class ReplayedNonceError(AuthorizationError):
    """Token nonce was already accepted."""

    kind = "replayed_nonce"


class PermissionDeniedError(AuthorizationError):
    """Token is valid but lacks the required permission."""

    kind = "permission_denied"


class EscalationError(AuthorizationError):
    """Delegated token asks for more than its parent grants."""

    kind = "escalation"


class TokenFormatError(AuthorizationError):
    """Token bytes cannot be decoded."""

    kind = "token_format"


# engine / client


class SchemaMismatchError(MaskdbError):
    """Row or request does not match the table schema."""

    kind = "schema_mismatch"


class ResultFormatError(MaskdbError):
    """Server response is inconsistent."""

    kind = "result_format"


class CostModelMismatchError(MaskdbError):
    """Measured operation counts differ from the prediction."""

    kind = "cost_model_mismatch"


class TransportError(MaskdbError):
    """Unable to reach the server or the connection broke."""

    kind = "transport"


class ServerError(MaskdbError):
    """Server answered with an error kind the client does not know."""

    def __init__(self, message: str, kind: str = "internal") -> None:
        """Keep the remote error kind.

        Args:
            message: remote error message.
            kind: remote error kind.

        """
        super().__init__(message)
        self.kind = kind


# wire


class UnknownTranscriptError(MaskdbError):
    """No transcript with that id in the stream."""

    kind = "unknown_transcript"


class FrameError(MaskdbError):
    """Wire frame or message is malformed."""

    kind = "frame"


def _all_subclasses(klass: Type[MaskdbError]):
    for sub in klass.__subclasses__():
        yield sub
        yield from _all_subclasses(sub)


ERRORS_BY_KIND: Dict[str, Type[MaskdbError]] = {
    klass.kind: klass
    for klass in _all_subclasses(MaskdbError)
    if klass is not ServerError
}


def error_from_kind(kind: str, message: str) -> MaskdbError:
    """Rebuild an exception received over the wire.

    Args:
        kind: the error kind sent by the server.
        message: the error message sent by the server.

    Returns:
        An instance of the matching class, or :class:`ServerError` if
        the kind is unknown.

    """
    klass: Optional[Type[MaskdbError]] = ERRORS_BY_KIND.get(kind)
    if klass is None:
        return ServerError(message, kind)
    if klass is SqlSyntaxError:
        exc = SqlSyntaxError.__new__(SqlSyntaxError)
        MaskdbError.__init__(exc, message)
        exc.position = -1
        return exc
    return klass(message)
