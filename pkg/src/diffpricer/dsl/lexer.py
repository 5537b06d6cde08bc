"""Tokenizer for the model scripting language.

`#` starts a comment running to end of line; a backslash at end of line
(optionally followed by trailing blanks) continues the statement on the
next line. Statements are otherwise line-delimited.
"""

from __future__ import annotations

from dataclasses import dataclass

from .nodes import Diagnostic, ScriptError

KEYWORDS = frozenset({"init", "pays", "discountby", "nodiscount", "if", "else"})

# token kinds
NUMBER = "number"
IDENT = "ident"
KEYWORD = "keyword"
OP = "op"
NEWLINE = "newline"
EOF = "eof"

_TWO_CHAR_OPS = ("<=", ">=")
_ONE_CHAR_OPS = "=+-*/()[],:<>"
_IDENT_START = frozenset("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_")
_IDENT_CONT = _IDENT_START | frozenset("0123456789")
_DIGITS = frozenset("0123456789")


@dataclass(frozen=True)
class Token:
    kind: str
    value: str
    line: int
    col: int

    def __repr__(self):
        return f"Token({self.kind}, {self.value!r}, {self.line}:{self.col})"


def tokenize(source: str, filename: str = "<script>") -> list[Token]:
    tokens: list[Token] = []
    line, col = 1, 1
    i, n = 0, len(source)

    def err(message: str, l=None, c=None):
        raise ScriptError(Diagnostic(l or line, c or col, message), filename)

    while i < n:
        ch = source[i]
        if ch == "#":
            while i < n and source[i] != "\n":
                i += 1
            continue
        if ch == "\\":
            j = i + 1
            while j < n and source[j] in " \t\r":
                j += 1
            if j < n and source[j] == "\n":
                i = j + 1
                line += 1
                col = 1
                continue
            if j >= n:
                i = j
                continue
            err("stray '\\' (line continuation must end the line)")
        if ch == "\n":
            if tokens and tokens[-1].kind != NEWLINE:
                tokens.append(Token(NEWLINE, "\n", line, col))
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch in _IDENT_START:
            start, start_col = i, col
            while i < n and source[i] in _IDENT_CONT:
                i += 1
                col += 1
            word = source[start:i]
            kind = KEYWORD if word in KEYWORDS else IDENT
            tokens.append(Token(kind, word, line, start_col))
            continue
        if ch in _DIGITS:
            start, start_col = i, col
            while i < n and source[i] in _DIGITS:
                i += 1
                col += 1
            if i < n and source[i] == "." and i + 1 < n and source[i + 1] in _DIGITS:
                i += 1
                col += 1
                while i < n and source[i] in _DIGITS:
                    i += 1
                    col += 1
            elif i < n and source[i] == ".":
                i += 1
                col += 1
            if i < n and source[i] in "eE":
                j = i + 1
                if j < n and source[j] in "+-":
                    j += 1
                if j < n and source[j] in _DIGITS:
                    while j < n and source[j] in _DIGITS:
                        j += 1
                    col += j - i
                    i = j
            tokens.append(Token(NUMBER, source[start:i], line, start_col))
            continue
        two = source[i:i + 2]
        if two in _TWO_CHAR_OPS:
            tokens.append(Token(OP, two, line, col))
            i += 2
            col += 2
            continue
        if ch in _ONE_CHAR_OPS:
            tokens.append(Token(OP, ch, line, col))
            i += 1
            col += 1
            continue
        err(f"illegal character {ch!r}")

    if tokens and tokens[-1].kind != NEWLINE:
        tokens.append(Token(NEWLINE, "\n", line, col))
    tokens.append(Token(EOF, "", line, col))
    return tokens
