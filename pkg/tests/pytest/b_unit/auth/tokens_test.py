"""Delegation tokens: issuing, attenuating and verifying."""
from __future__ import annotations

import random
import time

import pytest

from maskdb.auth.tokens import create_token
from maskdb.auth.tokens import delegate
from maskdb.auth.tokens import DelegationToken
from maskdb.auth.tokens import NonceCache
from maskdb.auth.tokens import OwnerKeypair
from maskdb.auth.tokens import Permission
from maskdb.auth.tokens import require
from maskdb.auth.tokens import verify_token
from maskdb.exceptions import AuthorizationError
from maskdb.exceptions import BadSignatureError
from maskdb.exceptions import EscalationError
from maskdb.exceptions import PermissionDeniedError
from maskdb.exceptions import ReplayedNonceError
from maskdb.exceptions import TokenExpiredError
from maskdb.exceptions import TokenFormatError

READ = Permission.READ
WRITE = Permission.WRITE
DELEGATE = Permission.DELEGATE

HOUR = 3600


@pytest.fixture(name="holder")
def holder_() -> OwnerKeypair:
    """Key of a user allowed to delegate further.

    Returns:
        A fresh key pair.

    """
    return OwnerKeypair.generate()


@pytest.fixture(name="root")
def root_(keypair, holder) -> DelegationToken:
    """Owner-signed token granting Read, Write and Delegate.

    Args:
        keypair: pytest fixture - see :func:`keypair_`.
        holder: pytest fixture - see :func:`holder_`.

    Returns:
        The token.

    """
    return create_token(
        keypair,
        "bob",
        [READ, WRITE, DELEGATE],
        int(time.time()) + HOUR,
        holder_key=holder.verification_key,
    )


@pytest.fixture(name="child")
def child_(root, holder) -> DelegationToken:
    """Read-only child of :func:`root_`.

    Args:
        root: pytest fixture - see :func:`root_`.
        holder: pytest fixture - see :func:`holder_`.

    Returns:
        The delegated token.

    """
    return delegate(root, holder, "carol", [READ])


def test_root_token_verifies(keypair, root) -> None:
    """Owner-signed tokens grant exactly their permissions.

    Args:
        keypair: pytest fixture - see :func:`keypair_`.
        root: pytest fixture - see :func:`root_`.

    """
    assert root.owner_id == keypair.owner_id
    assert root.depth == 0
    granted = verify_token(root, keypair.verification_key)
    assert granted == frozenset({READ, WRITE, DELEGATE})
    require(granted, WRITE)
    with pytest.raises(PermissionDeniedError):
        require(granted, Permission.DELETE)


def test_delegated_token_verifies(keypair, root, child) -> None:
    """A child carries its parent and verifies back to the owner.

    Args:
        keypair: pytest fixture - see :func:`keypair_`.
        root: pytest fixture - see :func:`root_`.
        child: pytest fixture - see :func:`child_`.

    """
    assert child.parent == root
    assert child.depth == 1
    assert child.expires_at == root.expires_at
    assert child.chain() == [root, child]
    assert verify_token(child, keypair.verification_key) == {READ}


def test_wire_form(child) -> None:
    """Tokens parse back from bytes and base64.

    Args:
        child: pytest fixture - see :func:`child_`.

    """
    assert DelegationToken.from_bytes(child.to_bytes()) == child
    assert DelegationToken.from_b64(child.to_b64()) == child
    with pytest.raises(TokenFormatError):
        DelegationToken.from_b64("%%%")


def test_escalation_refused(root, holder) -> None:
    """Children cannot widen permissions or outlive their parent.

    Args:
        root: pytest fixture - see :func:`root_`.
        holder: pytest fixture - see :func:`holder_`.

    """
    with pytest.raises(EscalationError):
        delegate(root, holder, "carol", [READ, Permission.DELETE])
    with pytest.raises(EscalationError):
        delegate(root, holder, "carol", [READ], root.expires_at + 1)


def test_delegation_needs_delegate_and_holder(keypair, holder) -> None:
    """Only holders of a Delegate token can issue children.

    Args:
        keypair: pytest fixture - see :func:`keypair_`.
        holder: pytest fixture - see :func:`holder_`.

    """
    expires = int(time.time()) + HOUR
    plain = create_token(
        keypair, "bob", [READ], expires, holder.verification_key
    )
    with pytest.raises(PermissionDeniedError):
        delegate(plain, holder, "carol", [READ])
    root = create_token(
        keypair, "bob", [READ, DELEGATE], expires, holder.verification_key
    )
    with pytest.raises(BadSignatureError):
        delegate(root, OwnerKeypair.generate(), "carol", [READ])


def test_forged_child_refused(keypair, root, holder) -> None:
    """A child claiming more than its parent fails verification.

    Args:
        keypair: pytest fixture - see :func:`keypair_`.
        root: pytest fixture - see :func:`root_`.
        holder: pytest fixture - see :func:`holder_`.

    """
    forged = DelegationToken(
        owner_id=root.owner_id,
        user_id="mallory",
        permissions=frozenset({READ, Permission.DELETE}),
        expires_at=root.expires_at,
        nonce=b"\x01" * 16,
        parent=root,
    )
    forged = DelegationToken(
        **{
            **vars(forged),
            "signature": holder.sign(forged.signed_bytes()),
        }
    )
    with pytest.raises(EscalationError):
        verify_token(forged, keypair.verification_key)


def test_wrong_owner(root) -> None:
    """Tokens only verify against their own owner's key.

    Args:
        root: pytest fixture - see :func:`root_`.

    """
    other = OwnerKeypair.generate()
    with pytest.raises(BadSignatureError):
        verify_token(root, other.verification_key)


def test_expiry(keypair, child) -> None:
    """Expired tokens are refused, down the whole chain.

    Args:
        keypair: pytest fixture - see :func:`keypair_`.
        child: pytest fixture - see :func:`child_`.

    """
    later = child.expires_at + 1
    with pytest.raises(TokenExpiredError):
        verify_token(child, keypair.verification_key, now=later)
    with pytest.raises(ValueError, match="future"):
        create_token(keypair, "bob", [READ], int(time.time()) - 1)
    with pytest.raises(ValueError, match="permission"):
        create_token(keypair, "bob", [], int(time.time()) + HOUR)


def test_replay(keypair, root) -> None:
    """A nonce is accepted once per cache.

    Args:
        keypair: pytest fixture - see :func:`keypair_`.
        root: pytest fixture - see :func:`root_`.

    """
    nonces = NonceCache()
    verify_token(root, keypair.verification_key, nonce_cache=nonces)
    with pytest.raises(ReplayedNonceError):
        verify_token(root, keypair.verification_key, nonce_cache=nonces)
    assert len(nonces) == 1


def test_nonce_cache_forgets_expired() -> None:
    """Entries are dropped once their token has expired."""
    nonces = NonceCache()
    nonces.check_and_insert(b"a" * 16, expires_at=100, now=50)
    nonces.check_and_insert(b"b" * 16, expires_at=300, now=150)
    assert len(nonces) == 1
    nonces.check_and_insert(b"a" * 16, expires_at=400, now=200)


@pytest.mark.parametrize("names", [["read", "Delegate"], ["WRITE"]])
def test_permission_names(names) -> None:
    """Permission names are read case-insensitively.

    Args:
        names: pytest parametrized arg.

    """
    assert {p.value.lower() for p in Permission.parse(names)} == {
        name.lower() for name in names
    }


def test_unknown_permission_name() -> None:
    """Unknown names are refused."""
    with pytest.raises(ValueError, match="admin"):
        Permission.parse(["admin"])


def _mutations(raw: bytes, count: int, seed: int):
    rng = random.Random(seed)
    for _ in range(count):
        data = bytearray(raw)
        action = rng.choice(("flip", "truncate", "insert", "swap"))
        position = rng.randrange(len(data))
        if action == "flip":
            data[position] ^= 1 << rng.randrange(8)
        elif action == "truncate":
            del data[position:]
        elif action == "insert":
            data.insert(position, rng.randrange(256))
        else:
            other = rng.randrange(len(data))
            if data[position] == data[other]:
                data[position] ^= 0xFF
            else:
                data[position], data[other] = data[other], data[position]
        yield bytes(data)


def test_mutated_tokens_rejected(keypair, child) -> None:
    """No single-edit mutation of a token's bytes is accepted.

    Args:
        keypair: pytest fixture - see :func:`keypair_`.
        child: pytest fixture - see :func:`child_`.

    """
    raw = child.to_bytes()
    rejected = 0
    for mutated in _mutations(raw, 1500, seed=1234):
        with pytest.raises(AuthorizationError):
            verify_token(
                DelegationToken.from_bytes(mutated),
                keypair.verification_key,
            )
        rejected += 1
    assert rejected == 1500
