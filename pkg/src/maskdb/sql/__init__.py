"""SQL frontend: parsing, encryption of literals, redaction, wire form."""
from maskdb.sql.ast import SelectStatement
from maskdb.sql.compiler import compile_to_het
from maskdb.sql.parser import parse_sql
from maskdb.sql.redaction import redact
from maskdb.sql.serialization import deserialize_ast
from maskdb.sql.serialization import render_sql
from maskdb.sql.serialization import serialize_ast

__all__ = [
    "SelectStatement",
    "compile_to_het",
    "deserialize_ast",
    "parse_sql",
    "redact",
    "render_sql",
    "serialize_ast",
]
