"""Lightweight parsing of single-function Python snippets.

Tool snippets are one top-level function each, so a full grammar is
unnecessary: a small lexer that skips strings and comments is enough to
pull out the function name, parameter names, the docstring, and the
decision-point count used for cyclomatic complexity.
"""

from __future__ import annotations

import inspect
from dataclasses import dataclass
from typing import TYPE_CHECKING

from .errors import InvariantError, NoFunctionError, SyntaxShapeError

if TYPE_CHECKING:  # pragma: no cover
    from .model import Tool

# Tokens counted as decision points, outside strings and comments.
# Ternaries and comprehension filters contribute through their `if`.
DECISION_KEYWORDS = frozenset(
    {"if", "elif", "for", "while", "and", "or", "except", "assert"}
)

_STRING_PREFIXES = {"r", "b", "u", "f", "rb", "br", "fr", "rf"}
_OPENERS = "([{"
_CLOSERS = ")]}"


@dataclass(frozen=True)
class Token:
    kind: str  # "name" | "string" | "op"
    value: str
    line: int  # 1-based start line
    col: int  # 0-based start column
    end_line: int


@dataclass(frozen=True)
class ParsedFunction:
    name: str
    params: tuple[str, ...]
    docstring: str
    body_span: tuple[int, int]  # (first line, last line), 1-based inclusive
    decision_points: int

    @property
    def arity(self) -> int:
        return len(self.params)


def _lex(code: str) -> list[Token]:
    """Tokenize into names, string literals and single-char ops.

    Comments vanish; string literals survive as single tokens so callers
    can read docstrings but never count keywords inside them.
    """
    tokens: list[Token] = []
    i, line, col = 0, 1, 0
    n = len(code)

    def advance(k: int = 1):
        nonlocal i, line, col
        for _ in range(k):
            if i < n and code[i] == "\n":
                line += 1
                col = 0
            else:
                col += 1
            i += 1

    while i < n:
        ch = code[i]
        if ch == "#":
            while i < n and code[i] != "\n":
                advance()
            continue
        if ch.isidentifier() or ch == "_":
            start_i, start_line, start_col = i, line, col
            while i < n and (code[i].isalnum() or code[i] == "_"):
                advance()
            word = code[start_i:i]
            # A string prefix directly followed by a quote is part of the literal.
            if word.lower() in _STRING_PREFIXES and i < n and code[i] in "'\"":
                quote_tok = _lex_string(code, i, line, col, advance)
                tokens.append(
                    Token("string", word + quote_tok.value, start_line, start_col, quote_tok.end_line)
                )
                continue
            tokens.append(Token("name", word, start_line, start_col, start_line))
            continue
        if ch in "'\"":
            tokens.append(_lex_string(code, i, line, col, advance))
            continue
        if not ch.isspace():
            tokens.append(Token("op", ch, line, col, line))
        advance()
    return tokens


def _lex_string(code, i, line, col, advance) -> Token:
    """Scan one string literal from the opening quote; advances the cursor."""
    start_i, start_line, start_col = i, line, col
    quote = code[i]
    n = len(code)
    if code[i : i + 3] in ("'''", '"""'):
        closer = code[i : i + 3]
        j = code.find(closer, i + 3)
        while j != -1 and _escaped(code, j):
            j = code.find(closer, j + 1)
        if j == -1:
            raise SyntaxShapeError(f"unterminated string starting at line {start_line}")
        end = j + 3
    else:
        j = i + 1
        while j < n:
            if code[j] == "\\":
                j += 2
                continue
            if code[j] == quote:
                break
            if code[j] == "\n":
                raise SyntaxShapeError(f"unterminated string starting at line {start_line}")
            j += 1
        if j >= n:
            raise SyntaxShapeError(f"unterminated string starting at line {start_line}")
        end = j + 1
    value = code[start_i:end]
    end_line = start_line + value.count("\n")
    advance(end - start_i)
    return Token("string", value, start_line, start_col, end_line)


def _escaped(code: str, pos: int) -> bool:
    backslashes = 0
    k = pos - 1
    while k >= 0 and code[k] == "\\":
        backslashes += 1
        k -= 1
    return backslashes % 2 == 1


def _strip_quotes(literal: str) -> str:
    body = literal
    while body and body[0].lower() in "rbuf":
        body = body[1:]
    for q in ("'''", '"""'):
        if body.startswith(q) and body.endswith(q) and len(body) >= 6:
            return body[3:-3]
    if len(body) >= 2 and body[0] in "'\"" and body[-1] == body[0]:
        return body[1:-1]
    return body


def count_decision_points(code: str) -> int:
    """Count branch-inducing keyword tokens; complexity = count + 1."""
    return sum(
        1 for tok in _lex(code) if tok.kind == "name" and tok.value in DECISION_KEYWORDS
    )


def cyclomatic_complexity(code: str) -> int:
    return count_decision_points(code) + 1


def parse_function(code: str) -> ParsedFunction:
    """Extract the first top-level function from ``code``.

    Parameter names come from the header with annotations and default
    expressions dropped; the docstring is the string literal standing as
    the first body statement, dedented with quotes stripped.
    """
    tokens = _lex(code)
    depth = 0
    def_idx = None
    for idx, tok in enumerate(tokens):
        if tok.kind == "op" and tok.value in _OPENERS:
            depth += 1
        elif tok.kind == "op" and tok.value in _CLOSERS:
            depth -= 1
        elif tok.kind == "name" and tok.value == "def" and depth == 0:
            at_margin = tok.col == 0
            if not at_margin and idx > 0:
                prev = tokens[idx - 1]
                at_margin = prev.kind == "name" and prev.value == "async" and prev.col == 0
            if at_margin:
                def_idx = idx
                break
    if def_idx is None:
        raise NoFunctionError("no top-level function definition found")

    def_tok = tokens[def_idx]
    idx = def_idx + 1
    if idx >= len(tokens) or tokens[idx].kind != "name":
        raise SyntaxShapeError("def keyword not followed by a function name")
    name = tokens[idx].value
    idx += 1
    if idx >= len(tokens) or tokens[idx].value != "(":
        raise SyntaxShapeError(f"function {name} has no parameter list")

    params: list[str] = []
    chunk: list[Token] = []
    depth = 0
    header_end = None
    for j in range(idx, len(tokens)):
        tok = tokens[j]
        if tok.kind == "op" and tok.value in _OPENERS:
            depth += 1
            continue
        if tok.kind == "op" and tok.value in _CLOSERS:
            depth -= 1
            if depth == 0:
                if chunk:
                    params.extend(_param_name(chunk))
                header_end = j
                break
            continue
        if depth == 1 and tok.kind == "op" and tok.value == ",":
            params.extend(_param_name(chunk))
            chunk = []
        elif depth >= 1:
            chunk.append(tok)
    if header_end is None:
        raise SyntaxShapeError(f"unbalanced parentheses in header of {name}")

    # skip an optional `-> annotation` up to the colon
    colon_idx = None
    depth = 0
    for j in range(header_end + 1, len(tokens)):
        tok = tokens[j]
        if tok.kind == "op" and tok.value in _OPENERS:
            depth += 1
        elif tok.kind == "op" and tok.value in _CLOSERS:
            depth -= 1
        elif tok.kind == "op" and tok.value == ":" and depth == 0:
            colon_idx = j
            break
    if colon_idx is None:
        raise SyntaxShapeError(f"missing `:` after header of {name}")

    docstring = ""
    body_tokens = tokens[colon_idx + 1 :]
    if body_tokens and body_tokens[0].kind == "string":
        docstring = inspect.cleandoc(_strip_quotes(body_tokens[0].value))

    last_line = tokens[colon_idx].end_line
    depth = 0
    for tok in body_tokens:
        if tok.kind == "op" and tok.value in _OPENERS:
            depth += 1
        elif tok.kind == "op" and tok.value in _CLOSERS:
            depth -= 1
        if tok.col == 0 and depth == 0 and tok.line > def_tok.line:
            break  # next top-level statement
        last_line = max(last_line, tok.end_line)

    return ParsedFunction(
        name=name,
        params=tuple(params),
        docstring=docstring,
        body_span=(def_tok.line, last_line),
        decision_points=count_decision_points(code),
    )


def _param_name(chunk: list[Token]) -> list[str]:
    # First identifier of the chunk is the parameter; annotation and default
    # expressions trail it. Bare `*` and `/` markers produce no name.
    for tok in chunk:
        if tok.kind == "name":
            return [tok.value]
        if tok.kind == "op" and tok.value in ":=":
            break
    return []


def verify_tool_shape(tool: "Tool") -> None:
    """Assert a tool's recorded name/arity/docstring agree with its code."""
    parsed = parse_function(tool.code)
    if parsed.name != tool.name:
        raise InvariantError(
            f"tool {tool.id}: recorded name {tool.name!r} but code defines {parsed.name!r}",
            field="name",
        )
    if parsed.arity != tool.arity:
        raise InvariantError(
            f"tool {tool.id}: recorded arity {tool.arity} but code declares {parsed.arity}",
            field="arity",
        )
    if parsed.docstring != tool.docstring:
        raise InvariantError(
            f"tool {tool.id}: recorded docstring does not match code", field="docstring"
        )
