"""Infix syntax for group-ring elements.

Grammar (whitespace ignored)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/")? unary)*        juxtaposition multiplies: "4u3"
    unary   := ("+" | "-") unary | power
    power   := atom ("^" "-"? INT)?
    atom    := INT | "u" | "u" DIGITS | "(" expr ")"

``u`` is the generator of Z; ``u1 .. ud`` are lattice generators; on the
Heisenberg group u1 = (0,1,0), u2 = (1,0,0), u3 = (0,0,1).  Division is only
by nonzero constants.  Negative powers are allowed for monomials only.
"""
from __future__ import annotations

import re
from fractions import Fraction

from .errors import ExpressionError
from .groups import HEISENBERG, GroupDescriptor, Lattice, inv_exp
from .ring import RingElement

_TOKEN = re.compile(r"\s*(?:(\d+)|(u\d*)|(\S))")


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            break
        start = m.start(m.lastindex) if m.lastindex else pos
        if m.group(1):
            tokens.append(("int", m.group(1), start))
        elif m.group(2):
            tokens.append(("gen", m.group(2), start))
        elif m.group(3):
            ch = m.group(3)
            if ch not in "+-*/^()":
                raise ExpressionError(f"unexpected character {ch!r}", text, start)
            tokens.append((ch, ch, start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


def infer_group(text: str) -> GroupDescriptor:
    names = re.findall(r"u(\d*)", text)
    if not names or all(n == "" for n in names):
        return Lattice(1)
    if any(n == "" for n in names):
        raise ExpressionError("mixing 'u' with indexed generators is ambiguous", text, text.index("u"))
    return Lattice(max(int(n) for n in names))


def generator_exponent(group: GroupDescriptor, name: str) -> tuple[int, ...]:
    if group.is_heisenberg:
        table = {"u1": (0, 1, 0), "u2": (1, 0, 0), "u3": (0, 0, 1)}
        if name not in table:
            raise KeyError(name)
        return table[name]
    if name == "u":
        if group.d != 1:
            raise KeyError(name)
        return (1,)
    k = int(name[1:])
    if not 1 <= k <= group.d:
        raise KeyError(name)
    return tuple(int(i == k - 1) for i in range(group.d))


class _Parser:
    def __init__(self, text: str, group: GroupDescriptor):
        self.text = text
        self.group = group
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self, kind=None):
        tok = self.tokens[self.i]
        if kind is not None and tok[0] != kind:
            want = "end of input" if kind == "end" else repr(kind)
            got = "end of input" if tok[0] == "end" else repr(tok[1])
            raise ExpressionError(f"expected {want}, found {got}", self.text, tok[2])
        self.i += 1
        return tok

    def parse(self) -> RingElement:
        out = self.expr()
        self.take("end")
        return out

    def expr(self) -> RingElement:
        out = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.take()[0]
            rhs = self.term()
            out = out + rhs if op == "+" else out - rhs
        return out

    def term(self) -> RingElement:
        out = self.unary()
        while True:
            kind = self.peek()[0]
            if kind == "*":
                self.take()
                out = out * self.unary()
            elif kind == "/":
                tok = self.take()
                rhs = self.unary()
                const = rhs.terms.get(self.group.identity)
                if len(rhs.terms) != 1 or const is None:
                    raise ExpressionError("can only divide by a nonzero constant", self.text, tok[2])
                out = out.scale(Fraction(1) / const)
            elif kind in ("int", "gen", "("):
                out = out * self.unary()
            else:
                return out

    def unary(self) -> RingElement:
        kind = self.peek()[0]
        if kind == "-":
            self.take()
            return -self.unary()
        if kind == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> RingElement:
        base = self.atom()
        if self.peek()[0] != "^":
            return base
        caret = self.take()
        neg = False
        if self.peek()[0] == "-":
            self.take()
            neg = True
        tok = self.take("int")
        k = int(tok[1])
        if neg:
            if len(base.terms) != 1:
                raise ExpressionError("negative powers need a monomial base", self.text, caret[2])
            (g, c), = base.terms.items()
            inv = RingElement(self.group, {inv_exp(self.group, g): Fraction(1) / c})
            return inv ** k
        return base ** k

    def atom(self) -> RingElement:
        tok = self.peek()
        if tok[0] == "int":
            self.take()
            return RingElement(self.group, {self.group.identity: int(tok[1])})
        if tok[0] == "gen":
            self.take()
            try:
                g = generator_exponent(self.group, tok[1])
            except (KeyError, ValueError):
                raise ExpressionError(f"generator {tok[1]!r} does not exist on {self.group}", self.text, tok[2])
            return RingElement(self.group, {g: 1})
        if tok[0] == "(":
            self.take()
            inner = self.expr()
            self.take(")")
            return inner
        got = "end of input" if tok[0] == "end" else repr(tok[1])
        raise ExpressionError(f"expected a number, generator or '(', found {got}", self.text, tok[2])


def parse_poly(text: str, group: GroupDescriptor | str | None = None) -> RingElement:
    """Parse ``text`` into an exact group-ring element.

    ``group`` may be a descriptor, one of "z", "z2", "z3", "h"/"heisenberg", or
    None to infer a lattice from the generator names used.
    """
    if isinstance(group, str):
        group = group_from_name(group)
    if group is None:
        group = infer_group(text)
    return _Parser(text, group).parse()


def group_from_name(name: str) -> GroupDescriptor:
    key = name.strip().lower()
    if key in ("h", "heisenberg"):
        return HEISENBERG
    m = re.fullmatch(r"z(\d*)", key)
    if m:
        return Lattice(int(m.group(1) or 1))
    raise ValueError(f"unknown group name {name!r} (use z, z2, z3 or heisenberg)")
