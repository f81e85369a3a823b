"""Recursive-descent parser for the field expression language.

Grammar (lowest to highest precedence)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | power
    power   := atom ("^" unary)?          # right-associative
    atom    := NUMBER | "x<i>" | FUNC "(" expr ")" | "(" expr ")"
"""

from __future__ import annotations

import re

from .ast import FUNCTIONS, BinOp, Call, Expr, Neg, Num, Var


class ExprSyntaxError(ValueError):
    """Raised for malformed expressions; ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int, source: str = ""):
        self.offset = offset
        self.source = source
        super().__init__(f"{message} at offset {offset}")


_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),])"
    r")"
)


def _tokenize(src: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    encoded_offsets = _byte_offsets(src)
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            bad = pos + (len(src[pos:]) - len(src[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {src[bad]!r}", encoded_offsets[bad], src)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), encoded_offsets[start]))
        pos = m.end()
    tokens.append(("end", "", len(src.encode())))
    return tokens


def _byte_offsets(src: str) -> list[int]:
    out, acc = [], 0
    for ch in src:
        out.append(acc)
        acc += len(ch.encode())
    out.append(acc)
    return out


class _Parser:
    def __init__(self, src: str, dim: int):
        self.src = src
        self.dim = dim
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, pos = self.take()
        if text != value or kind == "end":
            found = "end of input" if kind == "end" else repr(text)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", pos, self.src)

    def error(self, message: str, pos: int):
        return ExprSyntaxError(message, pos, self.src)

    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            _, op, pos = self.take()
            node = BinOp(op, node, self.term(), pos=pos)
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            _, op, pos = self.take()
            node = BinOp(op, node, self.unary(), pos=pos)
        return node

    def unary(self) -> Expr:
        kind, text, pos = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return Neg(self.unary(), pos=pos)
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, text, pos = self.peek()
        if kind == "op" and text == "^":
            self.take()
            return BinOp("^", base, self.unary(), pos=pos)
        return base

    def atom(self) -> Expr:
        kind, text, pos = self.take()
        if kind == "num":
            return Num(float(text), pos=pos)
        if kind == "name":
            if text in FUNCTIONS:
                self.expect("(")
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != 1:
                    raise self.error(f"{text}() takes 1 argument, got {len(args)}", pos)
                return Call(text, args[0], pos=pos)
            m = re.fullmatch(r"x([1-9][0-9]*)", text)
            if m:
                idx = int(m.group(1))
                if idx > self.dim:
                    raise self.error(f"variable {text} exceeds dimension {self.dim}", pos)
                return Var(idx - 1, pos=pos)
            raise self.error(f"unknown identifier {text!r}", pos)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(text)
        raise self.error(f"unexpected {found}", pos)


def parse(src: str, dim: int = 3) -> Expr:
    """Parse `src` into an expression tree over variables ``x1..x<dim>``."""
    if not isinstance(src, str) or not src.strip():
        raise ExprSyntaxError("empty expression", 0, src if isinstance(src, str) else "")
    p = _Parser(src, dim)
    node = p.expr()
    kind, text, pos = p.peek()
    if kind != "end":
        raise p.error(f"unexpected {text!r}", pos)
    return node
