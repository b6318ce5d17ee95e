"""Recursive-descent parser for the supported SELECT subset.

Grammar::

    statement  := SELECT columns FROM name [WHERE disjunct] [";"]
    columns    := "*" | name ("," name)*
    disjunct   := conjunct (OR conjunct)*
    conjunct   := factor (AND factor)*
    factor     := "(" disjunct ")" | operand cmp operand
    operand    := name | unsigned integer
    cmp        := "=" | "<" | "<=" | ">" | ">="

Keywords are case-insensitive, identifiers case-sensitive. Constructs
outside the subset (joins, grouping, ordering, strings, ...) fail with
:class:`maskdb.exceptions.UnsupportedSqlError`.

"""
from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass
from typing import List
from typing import Optional

from maskdb.exceptions import SqlSyntaxError
from maskdb.exceptions import UnsupportedSqlError
from maskdb.sql.ast import Binary
from maskdb.sql.ast import Comparison
from maskdb.sql.ast import Expr
from maskdb.sql.ast import Identifier
from maskdb.sql.ast import Number
from maskdb.sql.ast import Operand
from maskdb.sql.ast import SelectStatement

logger = logging.getLogger(__name__)

# Widest column type.
MAX_LITERAL = 2**32 - 1


class TokenType(enum.Enum):
    """Lexical token kinds."""

    SELECT = "SELECT"
    FROM = "FROM"
    WHERE = "WHERE"
    AND = "AND"
    OR = "OR"
    IDENTIFIER = "identifier"
    NUMBER = "number"
    STAR = "*"
    COMMA = ","
    LPAREN = "("
    RPAREN = ")"
    SEMICOLON = ";"
    OPERATOR = "operator"
    EOF = "end of input"


KEYWORDS = {
    "SELECT": TokenType.SELECT,
    "FROM": TokenType.FROM,
    "WHERE": TokenType.WHERE,
    "AND": TokenType.AND,
    "OR": TokenType.OR,
}

UNSUPPORTED_KEYWORDS = frozenset(
    {
        "ALL",
        "ALTER",
        "AS",
        "ASC",
        "AVG",
        "BETWEEN",
        "BY",
        "CASE",
        "COUNT",
        "CREATE",
        "CROSS",
        "DELETE",
        "DESC",
        "DISTINCT",
        "DROP",
        "EXCEPT",
        "EXISTS",
        "FULL",
        "GROUP",
        "HAVING",
        "IN",
        "INNER",
        "INSERT",
        "INTERSECT",
        "INTO",
        "IS",
        "JOIN",
        "LEFT",
        "LIKE",
        "LIMIT",
        "MAX",
        "MIN",
        "NOT",
        "NULL",
        "OFFSET",
        "ON",
        "ORDER",
        "OUTER",
        "RIGHT",
        "SET",
        "SUM",
        "UNION",
        "UPDATE",
        "VALUES",
        "WITH",
    }
)

_TOKEN_RE = re.compile(
    r"""
    (?P<space>\s+)
    |(?P<comment>--[^\n]*)
    |(?P<number>\d+(?:\.\d*)?)
    |(?P<word>[A-Za-z_][A-Za-z0-9_]*)
    |(?P<operator><=|>=|<>|!=|=|<|>)
    |(?P<punct>[*,();])
    |(?P<string>'|")
    """,
    re.VERBOSE,
)

_PUNCT = {
    "*": TokenType.STAR,
    ",": TokenType.COMMA,
    "(": TokenType.LPAREN,
    ")": TokenType.RPAREN,
    ";": TokenType.SEMICOLON,
}


@dataclass(frozen=True)
class Token:
    """Lexeme with its kind and start offset."""

    type: TokenType  # noqa: A003
    text: str
    position: int


class Lexer:
    """Split query text into tokens."""

    def __init__(self, text: str) -> None:
        """Keep the source text.

        Args:
            text: the query.

        """
        self.text = text

    def tokenize(self) -> List[Token]:
        """Produce every token, ending with EOF.

        Returns:
            The token list.

        Raises:
            SqlSyntaxError: unexpected character.
            UnsupportedSqlError: strings, decimals, integers wider than
                32 bits, ``!=``/``<>`` or an unsupported keyword.

        """
        tokens = []
        pos = 0
        while pos < len(self.text):
            match = _TOKEN_RE.match(self.text, pos)
            if not match:
                raise SqlSyntaxError(
                    f"Unexpected character {self.text[pos]!r}", pos
                )
            kind = match.lastgroup
            lexeme = match.group()
            if kind == "number":
                if "." in lexeme:
                    raise UnsupportedSqlError(
                        f"unsupported: non-integer literal '{lexeme}'"
                        f" at position {pos}"
                    )
                digits = lexeme.lstrip("0")
                if len(digits) > len(str(MAX_LITERAL)) or (
                    digits and int(digits) > MAX_LITERAL
                ):
                    raise UnsupportedSqlError(
                        f"unsupported: literal at position {pos} does not"
                        " fit in 32 bits"
                    )
                tokens.append(Token(TokenType.NUMBER, lexeme, pos))
            elif kind == "word":
                tokens.append(self._word(lexeme, pos))
            elif kind == "operator":
                if lexeme in ("<>", "!="):
                    raise UnsupportedSqlError(
                        f"unsupported: operator '{lexeme}' at position {pos}"
                    )
                tokens.append(Token(TokenType.OPERATOR, lexeme, pos))
            elif kind == "punct":
                tokens.append(Token(_PUNCT[lexeme], lexeme, pos))
            elif kind == "string":
                raise UnsupportedSqlError(
                    f"unsupported: string literal at position {pos}"
                )
            pos = match.end()
        tokens.append(Token(TokenType.EOF, "", len(self.text)))
        return tokens

    @staticmethod
    def _word(lexeme: str, pos: int) -> Token:
        upper = lexeme.upper()
        if upper in KEYWORDS:
            return Token(KEYWORDS[upper], lexeme, pos)
        if upper in UNSUPPORTED_KEYWORDS:
            raise UnsupportedSqlError(
                f"unsupported: '{upper}' at position {pos}; only"
                " SELECT ... FROM ... WHERE with =, <, <=, >, >=, AND, OR"
                " is supported"
            )
        return Token(TokenType.IDENTIFIER, lexeme, pos)


class Parser:
    """Build a :class:`SelectStatement` from tokens."""

    def __init__(self, tokens: List[Token]) -> None:
        """Start at the first token.

        Args:
            tokens: output of :meth:`Lexer.tokenize`.

        """
        self.tokens = tokens
        self.pos = 0

    @property
    def current(self) -> Token:  # noqa: D102
        return self.tokens[self.pos]

    def _advance(self) -> Token:
        token = self.current
        if token.type is not TokenType.EOF:
            self.pos += 1
        return token

    def _match(self, kind: TokenType) -> Optional[Token]:
        if self.current.type is kind:
            return self._advance()
        return None

    def _expect(self, kind: TokenType, what: str) -> Token:
        token = self._match(kind)
        if token is None:
            found = self.current.text or self.current.type.value
            raise SqlSyntaxError(
                f"Expected {what}, found '{found}'", self.current.position
            )
        return token

    def parse(self) -> SelectStatement:
        """Parse one statement.

        Returns:
            The statement.

        """
        self._expect(TokenType.SELECT, "SELECT")
        columns = self._columns()
        self._expect(TokenType.FROM, "FROM")
        table = self._expect(TokenType.IDENTIFIER, "table name").text
        where = self._disjunct() if self._match(TokenType.WHERE) else None
        self._match(TokenType.SEMICOLON)
        self._expect(TokenType.EOF, "end of statement")
        return SelectStatement(columns=columns, table=table, where=where)

    def _columns(self):
        if self._match(TokenType.STAR):
            return ("*",)
        names = [self._expect(TokenType.IDENTIFIER, "column list").text]
        while self._match(TokenType.COMMA):
            names.append(self._expect(TokenType.IDENTIFIER, "column").text)
        return tuple(names)

    def _disjunct(self) -> Expr:
        node = self._conjunct()
        while self._match(TokenType.OR):
            node = Binary("OR", node, self._conjunct())
        return node

    def _conjunct(self) -> Expr:
        node = self._factor()
        while self._match(TokenType.AND):
            node = Binary("AND", node, self._factor())
        return node

    def _factor(self) -> Expr:
        if self._match(TokenType.LPAREN):
            node = self._disjunct()
            self._expect(TokenType.RPAREN, "')'")
            return node
        left = self._operand()
        operator = self._expect(TokenType.OPERATOR, "comparison operator")
        return Comparison(operator.text, left, self._operand())

    def _operand(self) -> Operand:
        token = self.current
        if token.type is TokenType.IDENTIFIER:
            self._advance()
            return Identifier(token.text)
        if token.type is TokenType.NUMBER:
            self._advance()
            return Number(int(token.text.lstrip("0") or "0"))
        found = token.text or token.type.value
        raise SqlSyntaxError(
            f"Expected column or number, found '{found}'", token.position
        )


def parse_sql(text: str) -> SelectStatement:
    """Parse a query.

    Args:
        text: SQL text in the supported subset.

    Returns:
        The syntax tree.

    """
    statement = Parser(Lexer(text).tokenize()).parse()
    logger.debug("Parsed query over table '%s'", statement.table)
    return statement
