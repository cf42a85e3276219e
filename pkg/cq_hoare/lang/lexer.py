"""Tokenizer for cq-programs, assertion (.cqa) and state (.cqs) files."""

from __future__ import annotations

import re
from dataclasses import dataclass

KEYWORDS = frozenset(
    """program body end qvar var qudit int bool range const unitary measurement
    skip abort if then else while do measure true false and or not div mod in
    exists forall unif point""".split()
)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<num>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?i?)
  | (?P<id>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>:=\$|:=|\*=|\.\.|<=|>=|!=|=>|[=<>+\-*/^()\[\]{},;:.@])
    """,
    re.VERBOSE,
)


class ParseError(ValueError):
    """Lexical or syntax error at a source position."""

    def __init__(self, message: str, line: int = 0, col: int = 0) -> None:
        self.message = message
        self.line = line
        self.col = col
        where = f"line {line}, column {col}: " if line else ""
        super().__init__(f"{where}{message}")


@dataclass(frozen=True)
class Token:
    kind: str  # num | id | kw | op | eof
    text: str
    line: int
    col: int

    @property
    def pos(self) -> tuple[int, int]:
        return (self.line, self.col)


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, line_start, i = 1, 0, 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if m is None:
            raise ParseError(f"unexpected character {text[i]!r}", line, i - line_start + 1)
        kind = m.lastgroup
        col = i - line_start + 1
        if kind == "nl":
            line, line_start = line + 1, m.end()
        elif kind == "id":
            word = m.group()
            tokens.append(Token("kw" if word in KEYWORDS else "id", word, line, col))
        elif kind in ("num", "op"):
            tokens.append(Token(kind, m.group(), line, col))
        i = m.end()
    tokens.append(Token("eof", "", line, i - line_start + 1))
    return tokens
