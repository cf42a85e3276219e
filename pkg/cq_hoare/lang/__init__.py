"""Surface language: lexer, AST, parser and pretty-printer."""

from cq_hoare.lang.lexer import ParseError
from cq_hoare.lang.parser import parse
from cq_hoare.lang.printer import format_program

__all__ = ["ParseError", "format_program", "parse"]
