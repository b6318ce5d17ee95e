"""Client SDK: encrypt, submit, decrypt, filter."""
from maskdb.client.session import ClientSession
from maskdb.client.session import delegated_tokens
from maskdb.client.session import filter_rows
from maskdb.client.session import owner_tokens
from maskdb.client.session import PlainResultSet
from maskdb.client.transport import LocalTransport
from maskdb.client.transport import SocketTransport
from maskdb.client.transport import Transport

__all__ = [
    "ClientSession",
    "LocalTransport",
    "PlainResultSet",
    "SocketTransport",
    "Transport",
    "delegated_tokens",
    "filter_rows",
    "owner_tokens",
]
