"""Leakage transcripts and queries simulated from them."""
from __future__ import annotations

import base64
import json
import time

import pytest

from maskdb.auth.tokens import create_token
from maskdb.auth.tokens import OwnerKeypair
from maskdb.auth.tokens import Permission
from maskdb.crypto import codec
from maskdb.engine.transcript import LeakageTranscript
from maskdb.engine.transcript import simulate_query
from maskdb.exceptions import PermissionDeniedError
from maskdb.exceptions import UnknownTranscriptError
from maskdb.sql.ast import EncryptedLiteral
from maskdb.sql.ast import literals
from maskdb.sql.redaction import redact
from maskdb.sql.serialization import serialize_ast

from tests.utils import EMPLOYEE_ROWS

SAME_SHAPE = [
    "SELECT * FROM employees WHERE age > 18 AND salary < 1000",
    "SELECT * FROM employees WHERE age > 60 AND salary < 7",
    "SELECT * FROM employees WHERE age > 0 AND salary < 4000000000",
]


def _transcript_of(engine, session, sql) -> LeakageTranscript:
    session.execute(sql)
    return engine.audit_transcript()


def test_same_shape_same_leakage(engine, employees) -> None:
    """Queries differing only in literals leak the same tree and size.

    Args:
        engine: pytest fixture - see :func:`engine_`.
        employees: pytest fixture - see :func:`employees_`.

    """
    transcripts = [
        _transcript_of(engine, employees, sql) for sql in SAME_SHAPE
    ]
    assert len({t.redacted_ast for t in transcripts}) == 1
    assert {t.row_count for t in transcripts} == {len(EMPLOYEE_ROWS)}


def test_same_shape_bytes_match_without_token_nonce(
    engine, employees, keypair
) -> None:
    """Apart from each token's nonce and signature, leakage is identical.

    Args:
        engine: pytest fixture - see :func:`engine_`.
        employees: pytest fixture - see :func:`employees_`.
        keypair: pytest fixture - see :func:`keypair_`.

    """
    expires = int(time.time()) + 60
    transcripts = []
    for sql in SAME_SHAPE:
        statement = employees.encrypt_query(sql)
        token = create_token(keypair, "auditor", [Permission.READ], expires)
        engine.process_query(serialize_ast(statement), token)
        transcript = engine.audit_transcript()
        transcripts.append(transcript)
        raw = transcript.to_json()
        assert set(json.loads(raw)) == {"redacted_ast", "token", "row_count"}
        tree = json.dumps(json.loads(raw)["redacted_ast"])
        assert "FHEC" not in tree
        for leaf in literals(statement.where):
            ct = leaf.ciphertext
            assert base64.b64encode(codec.encode(ct)) not in raw
            assert base64.b64encode(ct.payload) not in raw
            assert ct.payload.hex().encode() not in raw
    assert len({t.comparable() for t in transcripts}) == 1
    assert len({t.to_json() for t in transcripts}) == len(SAME_SHAPE)


def test_different_shape_different_leakage(engine, employees) -> None:
    """Operators and columns are not hidden.

    Args:
        engine: pytest fixture - see :func:`engine_`.
        employees: pytest fixture - see :func:`employees_`.

    """
    first = _transcript_of(engine, employees, SAME_SHAPE[0])
    second = _transcript_of(
        engine,
        employees,
        "SELECT * FROM employees WHERE age > 18 OR salary < 1000",
    )
    assert first.redacted_ast != second.redacted_ast


def test_transcript_round_trip(engine, employees) -> None:
    """Posted transcripts are fetched back for audits.

    Args:
        engine: pytest fixture - see :func:`engine_`.
        employees: pytest fixture - see :func:`employees_`.

    """
    result = employees.submit(employees.encrypt_query(SAME_SHAPE[0]))
    assert result.transcript_id is not None
    fetched = employees.transcript(result.transcript_id)
    assert fetched == engine.audit_transcript()
    assert LeakageTranscript.from_dict(fetched.to_dict()) == fetched
    assert fetched.to_json() == engine.audit_transcript().to_json()
    assert b"age" in fetched.to_json()
    assert "⊥" in fetched.to_json().decode("utf-8")


def test_simulated_query_matches_real(engine, employees, backend, key):
    """A query rebuilt from the transcript has the real query's size.

    Args:
        engine: pytest fixture - see :func:`engine_`.
        employees: pytest fixture - see :func:`employees_`.
        backend: pytest fixture - see :func:`backend_`.
        key: pytest fixture - see :func:`key_`.

    """
    real = employees.encrypt_query(SAME_SHAPE[0])
    employees.submit(real)
    transcript = engine.audit_transcript()
    schema = employees.schema("employees")
    fake = simulate_query(transcript, backend, key, schema)
    assert redact(fake) == transcript.redacted_ast
    assert len(serialize_ast(fake)) == len(serialize_ast(real))
    leaves = list(literals(fake.where))
    assert all(isinstance(leaf, EncryptedLiteral) for leaf in leaves)
    assert [int(backend.decrypt(key, leaf.ciphertext)) for leaf in leaves] == [
        0,
        0,
    ]


def test_simulated_query_without_schema(engine, employees, backend, key):
    """Without a schema every literal is simulated at 32 bits.

    Args:
        engine: pytest fixture - see :func:`engine_`.
        employees: pytest fixture - see :func:`employees_`.
        backend: pytest fixture - see :func:`backend_`.
        key: pytest fixture - see :func:`key_`.

    """
    employees.execute("SELECT age FROM employees WHERE salary = 3")
    fake = simulate_query(engine.audit_transcript(), backend, key)
    assert [leaf.ciphertext.width for leaf in literals(fake.where)] == [32]


@pytest.mark.parametrize(
    "sql", ["SELECT age FROM employees", "SELECT * FROM employees"]
)
def test_simulated_query_without_where(engine, employees, backend, key, sql):
    """Queries without WHERE are their own simulation.

    Args:
        engine: pytest fixture - see :func:`engine_`.
        employees: pytest fixture - see :func:`employees_`.
        backend: pytest fixture - see :func:`backend_`.
        key: pytest fixture - see :func:`key_`.
        sql: pytest parametrized arg.

    """
    transcript = _transcript_of(engine, employees, sql)
    fake = simulate_query(transcript, backend, key)
    assert fake == transcript.redacted_ast


def test_transcript_of_other_owner(engine, employees) -> None:
    """Audits only reach the auditing owner's own queries.

    Args:
        engine: pytest fixture - see :func:`engine_`.
        employees: pytest fixture - see :func:`employees_`.

    """
    result = employees.submit(employees.encrypt_query(SAME_SHAPE[1]))
    other = OwnerKeypair.generate()
    engine.register_owner(other.verification_key)
    token = create_token(
        other, "auditor", [Permission.READ], int(time.time()) + 60
    )
    with pytest.raises(PermissionDeniedError):
        engine.transcript(result.transcript_id, token)


def test_unknown_transcript(employees) -> None:
    """Ids never posted are reported as such.

    Args:
        employees: pytest fixture - see :func:`employees_`.

    """
    with pytest.raises(UnknownTranscriptError):
        employees.transcript("404")
