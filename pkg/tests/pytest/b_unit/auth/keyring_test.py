"""Owner registry kept by the server."""
from __future__ import annotations

import time

import pytest

from maskdb.auth.keyring import Keyring
from maskdb.auth.keyring import sign_registration
from maskdb.auth.tokens import create_token
from maskdb.auth.tokens import OwnerKeypair
from maskdb.auth.tokens import Permission
from maskdb.exceptions import AuthorizationError
from maskdb.exceptions import BadSignatureError
from maskdb.exceptions import PermissionDeniedError
from maskdb.exceptions import ReplayedNonceError


def test_register_and_authorize(keypair, key) -> None:
    """Registered owners can authorize their own tokens, once each.

    Args:
        keypair: pytest fixture - see :func:`keypair_`.
        key: pytest fixture - see :func:`key_`.

    """
    keyring = Keyring()
    proof = sign_registration(keypair, key.public())
    record = keyring.register(keypair.verification_key, key, proof)
    assert record.owner_id == keypair.owner_id
    assert not record.key_material.has_secret
    assert keypair.owner_id in keyring
    token = create_token(
        keypair, "bob", [Permission.READ], int(time.time()) + 60
    )
    assert keyring.authorize(token, Permission.READ) == {Permission.READ}
    with pytest.raises(ReplayedNonceError):
        keyring.authorize(token, Permission.READ)


def test_missing_permission(keypair) -> None:
    """A valid token without the needed right is denied.

    Args:
        keypair: pytest fixture - see :func:`keypair_`.

    """
    keyring = Keyring()
    keyring.register(keypair.verification_key)
    token = create_token(
        keypair, "bob", [Permission.READ], int(time.time()) + 60
    )
    with pytest.raises(PermissionDeniedError):
        keyring.authorize(token, Permission.WRITE)


def test_unknown_owner(keypair) -> None:
    """Tokens of unregistered owners are refused.

    Args:
        keypair: pytest fixture - see :func:`keypair_`.

    """
    token = create_token(
        keypair, "bob", [Permission.READ], int(time.time()) + 60
    )
    with pytest.raises(AuthorizationError, match="Unknown owner"):
        Keyring().authorize(token, Permission.READ)


def test_bad_registration_proof(keypair, key) -> None:
    """A proof signed by another key is refused.

    Args:
        keypair: pytest fixture - see :func:`keypair_`.
        key: pytest fixture - see :func:`key_`.

    """
    proof = sign_registration(OwnerKeypair.generate(), key.public())
    with pytest.raises(BadSignatureError):
        Keyring().register(keypair.verification_key, key, proof)


def test_persistence(keypair, key, tmp_path) -> None:
    """A keyring file survives a restart without secrets.

    Args:
        keypair: pytest fixture - see :func:`keypair_`.
        key: pytest fixture - see :func:`key_`.
        tmp_path: pytest fixture.

    """
    path = tmp_path / "keys" / "owners.json"
    Keyring(path).register(keypair.verification_key, key)
    reloaded = Keyring(path)
    assert len(reloaded) == 1
    record = reloaded.get(keypair.owner_id)
    assert record.verification_key == keypair.verification_key
    assert record.key_material == key.public()
    assert not any(item.key_material.has_secret for item in reloaded)


def test_owner_keypair_files(keypair, tmp_path) -> None:
    """Owner keys round-trip through PEM and refuse silent overwrites.

    Args:
        keypair: pytest fixture - see :func:`keypair_`.
        tmp_path: pytest fixture.

    """
    private = keypair.save(tmp_path)
    assert private.stat().st_mode & 0o777 == 0o600
    assert OwnerKeypair.load(tmp_path).owner_id == keypair.owner_id
    with pytest.raises(FileExistsError):
        OwnerKeypair.generate().save(tmp_path)
    other = OwnerKeypair.generate()
    other.save(tmp_path, overwrite=True)
    assert OwnerKeypair.load(tmp_path).owner_id == other.owner_id
