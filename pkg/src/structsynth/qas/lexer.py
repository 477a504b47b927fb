"""Line-oriented lexer with indentation tracking.

Indentation uses spaces only; a tab anywhere in a line is a lexical error.
Blank and comment-only lines produce no tokens. Errors are collected per line
so the parser can report every problem in one pass.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

KEYWORDS = frozenset({"import", "for", "in", "if", "else", "True", "False", "None"})

# Longest operators first so '==' wins over '='.
_OPERATORS = ("==", "!=", "<=", ">=", "=", "<", ">", "+", "-", "*", "/", "%",
              "(", ")", "[", "]", ",", ".", ":")

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUM_RE = re.compile(r"\d+(\.\d+)?")

_ESCAPES = {"\\": "\\", "'": "'", '"': '"', "n": "\n", "t": "\t"}


@dataclass(frozen=True)
class Token:
    kind: str  # NAME KW INT FLOAT STRING OP NEWLINE INDENT DEDENT EOF
    text: str
    line: int
    col: int


@dataclass(frozen=True)
class LexIssue:
    line: int
    col: int
    message: str


def tokenize(source: str) -> tuple[list[Token], list[LexIssue]]:
    tokens: list[Token] = []
    issues: list[LexIssue] = []
    indents = [0]
    lineno = 0

    for raw_line in source.splitlines():
        lineno += 1
        if "\t" in raw_line:
            issues.append(LexIssue(lineno, raw_line.index("\t") + 1, "tab character not allowed"))
            continue
        stripped = raw_line.strip()
        if not stripped or stripped.startswith("#"):
            continue

        width = len(raw_line) - len(raw_line.lstrip(" "))
        if width > indents[-1]:
            indents.append(width)
            tokens.append(Token("INDENT", "", lineno, 1))
        else:
            while width < indents[-1]:
                indents.pop()
                tokens.append(Token("DEDENT", "", lineno, 1))
            if width != indents[-1]:
                issues.append(LexIssue(lineno, 1, "unindent does not match any outer level"))
                indents.append(width)

        ok = _lex_line(raw_line, lineno, width, tokens, issues)
        if ok:
            tokens.append(Token("NEWLINE", "", lineno, len(raw_line) + 1))
        else:
            # Drop the partial line so the parser never sees a broken tail.
            while tokens and tokens[-1].kind not in ("NEWLINE", "INDENT", "DEDENT"):
                tokens.pop()
            tokens.append(Token("NEWLINE", "", lineno, len(raw_line) + 1))

    while len(indents) > 1:
        indents.pop()
        tokens.append(Token("DEDENT", "", lineno + 1, 1))
    tokens.append(Token("EOF", "", lineno + 1, 1))
    return tokens, issues


def _lex_line(line: str, lineno: int, start: int, tokens: list[Token], issues: list[LexIssue]) -> bool:
    i = start
    n = len(line)
    while i < n:
        ch = line[i]
        if ch == " ":
            i += 1
            continue
        if ch == "#":
            break
        col = i + 1
        if ch in "'\"":
            value, end = _lex_string(line, i, lineno, issues)
            if end is None:
                return False
            tokens.append(Token("STRING", value, lineno, col))
            i = end
            continue
        m = _NUM_RE.match(line, i)
        if m:
            text = m.group(0)
            kind = "FLOAT" if "." in text else "INT"
            tokens.append(Token(kind, text, lineno, col))
            i = m.end()
            continue
        m = _NAME_RE.match(line, i)
        if m:
            text = m.group(0)
            kind = "KW" if text in KEYWORDS else "NAME"
            tokens.append(Token(kind, text, lineno, col))
            i = m.end()
            continue
        for op in _OPERATORS:
            if line.startswith(op, i):
                tokens.append(Token("OP", op, lineno, col))
                i += len(op)
                break
        else:
            issues.append(LexIssue(lineno, col, f"unexpected character {ch!r}"))
            return False
    return True


def _lex_string(line: str, i: int, lineno: int, issues: list[LexIssue]) -> tuple[str, int | None]:
    quote = line[i]
    out: list[str] = []
    j = i + 1
    while j < len(line):
        ch = line[j]
        if ch == "\\":
            if j + 1 < len(line) and line[j + 1] in _ESCAPES:
                out.append(_ESCAPES[line[j + 1]])
                j += 2
                continue
            issues.append(LexIssue(lineno, j + 1, "bad escape sequence"))
            return "", None
        if ch == quote:
            return "".join(out), j + 1
        out.append(ch)
        j += 1
    issues.append(LexIssue(lineno, i + 1, "unterminated string literal"))
    return "", None
