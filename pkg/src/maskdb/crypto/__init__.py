"""Homomorphic evaluation backends.

:class:`maskdb.crypto.base.Backend` defines the key generation,
encryption and operator interface; ``sim`` is the instrumented
cleartext backend and ``fhe`` the optional OpenFHE adapter.

"""
from maskdb.crypto.base import Backend
from maskdb.crypto.base import BackendStats
from maskdb.crypto.latency import LatencyTable
from maskdb.crypto.types import CipherBool
from maskdb.crypto.types import Ciphertext
from maskdb.crypto.types import KeyMaterial
from maskdb.crypto.types import Op
from maskdb.crypto.types import OpKey
from maskdb.crypto.types import PlainScalar

__all__ = [
    "Backend",
    "BackendStats",
    "CipherBool",
    "Ciphertext",
    "KeyMaterial",
    "LatencyTable",
    "Op",
    "OpKey",
    "PlainScalar",
]
