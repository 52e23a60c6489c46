"""Lexer and recursive-descent parser for Basic HydLa source text.

Concrete syntax (ASCII, with Unicode aliases)::

    program     := definition* [declaration]
    definition  := NAME "<=>" constraint "."
    declaration := decl "."
    decl        := prio ("," prio)*
    prio        := dunit ("<<" dunit)*          # right side is stronger
    dunit       := NAME | "(" decl ")"
    constraint  := conj ["=>" constraint]      # left side must be a guard
    conj        := unit (("&" | "/\\") unit)*
    unit        := "[]" unit | ("E" | "exists") NAME "." unit
                 | "(" constraint ")" | atom
    atom        := expr relop expr
    expr        := term (("+" | "-") term)*
    term        := unary (("*" | "/") unary)*
    unary       := "-" unary | postfix
    postfix     := primary ("'" | "-")*        # derivative, left limit
    primary     := NUMBER | NAME | "(" expr ")"

A ``-`` directly after an operand is a left-limit when the next token cannot
start an operand.  Comments run from ``//`` to end of line.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

from .ast import (RELOPS, Always, Atom, BinOp, Constraint, Exists, HydlaError,
                  Implies, Neg, Num, Var, differentiate, fold, left_limit)
from .poset import ModuleSetPoset, derive_from_priorities


class ParseError(HydlaError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {message}" if line else message)
        self.message = message
        self.line = line
        self.col = col


_UNICODE = {"□": "[]", "∧": "&", "⇒": "=>", "⇔": "<=>", "∃": "E ", "≠": "!=",
            "≤": "<=", "≥": ">=", "−": "-", "≪": "<<"}

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+|//[^\n]*)
  | (?P<num>\d+(?:\.\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*(?:\#[0-9]+)?)
  | (?P<op><=>|<<|<=|>=|!=|=>|/\\|\[\]|[=<>&(),.+\-*/'])
""", re.VERBOSE)


@dataclass
class Token:
    kind: str  # num, name, op, eof
    text: str
    line: int
    col: int


def tokenize(text: str) -> List[Token]:
    for k, v in _UNICODE.items():
        text = text.replace(k, v)
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), line, pos - line_start + 1))
        nl = m.group().count("\n")
        if nl:
            line += nl
            line_start = pos + m.group().rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# -- declarations --------------------------------------------------------------

@dataclass(frozen=True)
class Ref:
    name: str


@dataclass(frozen=True)
class Parallel:
    items: Tuple


@dataclass(frozen=True)
class Priority:
    items: Tuple  # weakest first


def decl_modules(d) -> List[str]:
    if isinstance(d, Ref):
        return [d.name]
    out = []
    for item in d.items:
        for m in decl_modules(item):
            if m not in out:
                out.append(m)
    return out


def decl_priorities(d) -> set:
    """Pairs (weak, strong) generated by ``<<``, before transitive closure."""
    pairs = set()
    if isinstance(d, Ref):
        return pairs
    for item in d.items:
        pairs |= decl_priorities(item)
    if isinstance(d, Priority):
        for lo, hi in zip(d.items, d.items[1:]):
            pairs |= {(a, b) for a in decl_modules(lo) for b in decl_modules(hi)}
    return pairs


def format_decl(d, top: bool = True) -> str:
    if isinstance(d, Ref):
        return d.name
    if isinstance(d, Parallel):
        s = ", ".join(format_decl(i, False) for i in d.items)
        return s if top else f"({s})"
    return " << ".join(format_decl(i, False) for i in d.items)


def derive_module_poset(decl) -> ModuleSetPoset:
    """Admissible module sets for a declaration, ordered by strict inclusion."""
    return derive_from_priorities(decl_modules(decl), decl_priorities(decl))


# -- program -----------------------------------------------------------------------

@dataclass
class Program:
    ds: Dict[str, frozenset]
    ms: Optional[ModuleSetPoset] = None
    declaration: object = None
    source: str = ""
    # (weak, strong) pairs when the poset was derived from a declaration
    priorities: Optional[set] = None
    cont_modules: Dict[str, tuple] = field(default_factory=dict)

    def check(self):
        if self.ms is None:
            raise HydlaError("program has no module-set poset (declaration or explicit poset)")
        missing = set().union(*self.ms.elements) - set(self.ds) if self.ms.elements else set()
        if missing:
            raise HydlaError(f"poset references undefined modules: {sorted(missing)}")


class Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def error(self, msg: str, tok: Optional[Token] = None):
        tok = tok or self.tok
        raise ParseError(msg, tok.line, tok.col)

    def accept(self, text: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        tok = self.tok
        if not self.accept(text):
            self.error(f"expected {text!r}, found {tok.text or 'end of input'!r}")
        return tok

    def name(self) -> str:
        if self.tok.kind != "name":
            self.error(f"expected a name, found {self.tok.text or 'end of input'!r}")
        self.i += 1
        return self.tokens[self.i - 1].text

    # program level
    def program(self) -> Tuple[Dict[str, frozenset], object]:
        ds: Dict[str, frozenset] = {}
        decl = None
        while self.tok.kind != "eof":
            if decl is not None:
                self.error("declaration must be the last statement")
            if self.tok.kind == "name" and self.peek().text == "<=>":
                tok = self.tok
                name = self.name()
                self.expect("<=>")
                body = self.constraint()
                self.expect(".")
                if name in ds:
                    self.error(f"duplicate module definition {name!r}", tok)
                ds[name] = body
            else:
                decl = self.decl()
                self.expect(".")
        return ds, decl

    def decl(self):
        items = [self.prio()]
        while self.accept(","):
            items.append(self.prio())
        return items[0] if len(items) == 1 else Parallel(tuple(items))

    def prio(self):
        items = [self.dunit()]
        while self.accept("<<"):
            items.append(self.dunit())
        return items[0] if len(items) == 1 else Priority(tuple(items))

    def dunit(self):
        if self.accept("("):
            d = self.decl()
            self.expect(")")
            return d
        tok = self.tok
        ref = Ref(self.name())
        self._decl_tokens.append((ref.name, tok))
        return ref

    # constraints
    def constraint(self) -> frozenset:
        start = self.tok
        lhs = self.conj()
        if self.accept("=>"):
            if not all(isinstance(c, Atom) for c in lhs):
                self.error("guards may only contain atomic constraints", start)
            return frozenset({Implies(lhs, self.constraint())})
        return lhs

    def conj(self) -> frozenset:
        parts = set(self.unit())
        while self.accept("&") or self.accept("/\\"):
            parts |= self.unit()
        return frozenset(parts)

    def _is_exists(self) -> bool:
        return (self.tok.kind == "name" and self.tok.text in ("E", "exists")
                and self.peek().kind == "name" and self.peek(2).text == ".")

    def unit(self) -> frozenset:
        if self.accept("[]"):
            return frozenset({Always(self.unit())})
        if self._is_exists():
            self.i += 1
            var = self.name()
            self.expect(".")
            return frozenset({Exists(var, self.unit())})
        if self.tok.text == "(" and self._paren_is_constraint():
            self.expect("(")
            c = self.constraint()
            self.expect(")")
            return c
        return frozenset({self.atom()})

    def _paren_is_constraint(self) -> bool:
        """Decide whether '(' opens a constraint or an arithmetic expression."""
        depth = 0
        j = self.i
        while j < len(self.tokens):
            t = self.tokens[j]
            if t.text == "(":
                depth += 1
            elif t.text == ")":
                depth -= 1
                if depth == 0:
                    nxt = self.tokens[j + 1] if j + 1 < len(self.tokens) else t
                    return nxt.text not in RELOPS and nxt.text not in "+-*/'"
            elif depth >= 1 and t.text in RELOPS + ("[]", "&", "/\\", "=>"):
                return True
            elif t.kind == "eof":
                return False
            j += 1
        return False

    def atom(self) -> Atom:
        lhs = self.expr()
        tok = self.tok
        if tok.text not in RELOPS:
            self.error(f"expected a relational operator, found {tok.text or 'end of input'!r}")
        self.i += 1
        return Atom(lhs, tok.text, self.expr())

    def expr(self):
        node = self.term()
        while self.tok.text in ("+", "-"):
            op = self.tok.text
            self.i += 1
            node = fold(BinOp(op, node, self.term()))
        return node

    def term(self):
        node = self.unary()
        while self.tok.text in ("*", "/"):
            op = self.tok
            self.i += 1
            rhs = self.unary()
            if op.text == "/":
                if not isinstance(rhs, Num):
                    self.error("division is only allowed by numeric literals", op)
                if rhs.value == 0:
                    self.error("division by literal zero", op)
            node = fold(BinOp(op.text, node, rhs))
        return node

    def unary(self):
        if self.accept("-"):
            return fold(Neg(self.unary()))
        return self.postfix()

    def _starts_operand(self, tok: Token) -> bool:
        return tok.kind in ("num", "name") or tok.text in ("(", "-")

    def postfix(self):
        node = self.primary()
        while True:
            tok = self.tok
            try:
                if self.accept("'"):
                    node = fold(differentiate(node))
                elif tok.text == "-" and not self._starts_operand(self.peek()):
                    self.i += 1
                    node = left_limit(node)
                else:
                    return node
            except ParseError:
                raise
            except HydlaError as exc:
                self.error(str(exc), tok)

    def primary(self):
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Num(Fraction(tok.text))
        if tok.kind == "name":
            self.i += 1
            return Var(tok.text)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        self.error(f"unexpected {tok.text or 'end of input'!r}")


def parse_constraint(text: str) -> frozenset:
    """Parse a standalone constraint (conjunction) such as ``x' = 1 & y = 0``."""
    p = Parser(text)
    p._decl_tokens = []
    c = p.constraint()
    p.accept(".")
    if p.tok.kind != "eof":
        p.error(f"unexpected {p.tok.text!r} after constraint")
    return c


def parse_program(text: str) -> Program:
    """Parse program text; the poset is derived when a declaration is present."""
    p = Parser(text)
    p._decl_tokens = []
    for tok in p.tokens:
        if tok.kind == "name" and "#" in tok.text:
            raise ParseError(f"'#' is reserved for generated names: {tok.text!r}", tok.line, tok.col)
    ds, decl = p.program()
    seen = set()
    for name, tok in p._decl_tokens:
        if name not in ds:
            raise ParseError(f"reference to undefined module {name!r}", tok.line, tok.col)
        if name in seen:
            raise ParseError(f"module {name!r} appears more than once in the declaration",
                             tok.line, tok.col)
        seen.add(name)
    prog = Program(ds=ds, declaration=decl, source=text)
    if decl is not None:
        prog.priorities = decl_priorities(decl)
        prog.ms = derive_module_poset(decl)
    return prog


def format_program(prog: Program) -> str:
    from .ast import format_set
    lines = [f"{name} <=> {format_set(body)}." for name, body in prog.ds.items()]
    if prog.declaration is not None:
        lines.append(format_decl(prog.declaration) + ".")
    return "\n".join(lines) + "\n"
