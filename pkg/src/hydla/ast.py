"""AST node types for Basic HydLa constraints and expressions.

Conjunctions are plain ``frozenset`` objects of constraint nodes; every
constraint body (``Always``, ``Exists``, ``Implies``) holds such a set.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import FrozenSet, Union

RELOPS = ("=", "!=", "<", "<=", ">", ">=")
NEGATED_RELOP = {"=": "!=", "!=": "=", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}


class HydlaError(Exception):
    """Base class for every error raised by this package."""


class UnsupportedError(HydlaError):
    """Raised when a program falls outside the supported constraint class."""


@dataclass(frozen=True)
class Num:
    value: Fraction


@dataclass(frozen=True)
class Var:
    name: str
    order: int = 0
    left: bool = False


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Num, Var, Neg, BinOp]


@dataclass(frozen=True)
class Atom:
    lhs: Expr
    op: str
    rhs: Expr

    def __post_init__(self):
        if self.op not in RELOPS:
            raise HydlaError(f"unknown relational operator {self.op!r}")

    def negated(self) -> "Atom":
        return Atom(self.lhs, NEGATED_RELOP[self.op], self.rhs)

    def __str__(self):
        return format_constraint(self)


@dataclass(frozen=True)
class Implies:
    guard: FrozenSet[Atom]
    body: FrozenSet["Constraint"]

    def __str__(self):
        return format_constraint(self)


@dataclass(frozen=True)
class Always:
    body: FrozenSet["Constraint"]

    def __str__(self):
        return format_constraint(self)


@dataclass(frozen=True)
class Exists:
    var: str
    body: FrozenSet["Constraint"]

    def __str__(self):
        return format_constraint(self)


Constraint = Union[Atom, Implies, Always, Exists]


# -- expression helpers ------------------------------------------------------

def fold(node: Expr) -> Expr:
    """Collapse operators whose operands are all literals."""
    if isinstance(node, Neg) and isinstance(node.arg, Num):
        return Num(-node.arg.value)
    if isinstance(node, BinOp) and isinstance(node.left, Num) and isinstance(node.right, Num):
        a, b = node.left.value, node.right.value
        if node.op == "+":
            return Num(a + b)
        if node.op == "-":
            return Num(a - b)
        if node.op == "*":
            return Num(a * b)
        if node.op == "/":
            if b == 0:
                raise HydlaError("division by literal zero")
            return Num(a / b)
    return node


def differentiate(node: Expr) -> Expr:
    """Push a derivative postfix down to variable occurrences.

    Only expressions that are linear with constant coefficients can be
    differentiated this way; anything else raises ``HydlaError``.
    """
    if isinstance(node, Num):
        return Num(Fraction(0))
    if isinstance(node, Var):
        return Var(node.name, node.order + 1, node.left)
    if isinstance(node, Neg):
        return fold(Neg(differentiate(node.arg)))
    if node.op in "+-":
        return fold(BinOp(node.op, differentiate(node.left), differentiate(node.right)))
    if node.op == "*" and isinstance(node.left, Num):
        return fold(BinOp("*", node.left, differentiate(node.right)))
    if node.op in "*/" and isinstance(node.right, Num):
        return fold(BinOp(node.op, differentiate(node.left), node.right))
    raise HydlaError("derivative of a non-linear expression is not supported")


def left_limit(node: Expr) -> Expr:
    if isinstance(node, Num):
        return node
    if isinstance(node, Var):
        if node.left:
            raise HydlaError(f"left-limit applied twice to {node.name}")
        return Var(node.name, node.order, True)
    if isinstance(node, Neg):
        return Neg(left_limit(node.arg))
    return BinOp(node.op, left_limit(node.left), left_limit(node.right))


def expr_vars(node: Expr):
    """Yield every Var occurrence in an expression."""
    if isinstance(node, Var):
        yield node
    elif isinstance(node, Neg):
        yield from expr_vars(node.arg)
    elif isinstance(node, BinOp):
        yield from expr_vars(node.left)
        yield from expr_vars(node.right)


def atom_vars(atom: Atom):
    yield from expr_vars(atom.lhs)
    yield from expr_vars(atom.rhs)


def rename_expr(node: Expr, old: str, new: str) -> Expr:
    if isinstance(node, Var):
        return Var(new, node.order, node.left) if node.name == old else node
    if isinstance(node, Neg):
        return Neg(rename_expr(node.arg, old, new))
    if isinstance(node, BinOp):
        return BinOp(node.op, rename_expr(node.left, old, new), rename_expr(node.right, old, new))
    return node


def rename(c: Constraint, old: str, new: str) -> Constraint:
    """Rename free occurrences of variable ``old`` to ``new``."""
    if isinstance(c, Atom):
        return Atom(rename_expr(c.lhs, old, new), c.op, rename_expr(c.rhs, old, new))
    if isinstance(c, Implies):
        return Implies(frozenset(rename(g, old, new) for g in c.guard),
                       frozenset(rename(b, old, new) for b in c.body))
    if isinstance(c, Always):
        return Always(frozenset(rename(b, old, new) for b in c.body))
    if c.var == old:
        return c
    return Exists(c.var, frozenset(rename(b, old, new) for b in c.body))


def constraint_atoms(c: Constraint):
    """Yield every atom nested anywhere in ``c`` (guards included)."""
    if isinstance(c, Atom):
        yield c
    elif isinstance(c, Implies):
        yield from c.guard
        for b in c.body:
            yield from constraint_atoms(b)
    else:
        for b in c.body:
            yield from constraint_atoms(b)


def bound_names(c: Constraint):
    if isinstance(c, Exists):
        yield c.var
    if not isinstance(c, Atom):
        for b in c.body:
            yield from bound_names(b)


def is_differential(atom: Atom) -> bool:
    """An equation ``x^(n) = e`` (n >= 1) with no left-limit anywhere."""
    return (atom.op == "=" and isinstance(atom.lhs, Var) and atom.lhs.order >= 1
            and not any(v.left for v in atom_vars(atom)))


# -- pretty printing -----------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def format_number(q: Fraction) -> str:
    if q.denominator == 1:
        return str(q.numerator)
    d = q.denominator
    twos = fives = 0
    while d % 2 == 0:
        d //= 2
        twos += 1
    while d % 5 == 0:
        d //= 5
        fives += 1
    if d == 1:
        digits = max(twos, fives)
        scaled = abs(q.numerator) * (10 ** digits // q.denominator)
        s = str(scaled).rjust(digits + 1, "0")
        sign = "-" if q < 0 else ""
        return f"{sign}{s[:-digits]}.{s[-digits:]}"
    return f"({q.numerator}/{q.denominator})"


def _ends_with_left_limit(node: Expr) -> bool:
    if isinstance(node, Var):
        return node.left
    if isinstance(node, BinOp):
        return _ends_with_left_limit(node.right)
    if isinstance(node, Neg):
        return _ends_with_left_limit(node.arg)
    return False


def format_expr(node: Expr, prec: int = 0) -> str:
    if isinstance(node, Num):
        s = format_number(node.value)
        return f"({s})" if node.value < 0 and prec > 0 else s
    if isinstance(node, Var):
        return node.name + "'" * node.order + ("-" if node.left else "")
    if isinstance(node, Neg):
        s = "-" + format_expr(node.arg, 3)
        return f"({s})" if prec > 2 else s
    p = _PREC[node.op]
    lhs = format_expr(node.left, p)
    if _ends_with_left_limit(node.left) and node.op == "-" and not lhs.endswith(")"):
        lhs = f"({lhs})"
    s = f"{lhs} {node.op} {format_expr(node.right, p + 1)}"
    return f"({s})" if p < prec else s


def format_set(cs) -> str:
    prec = 1 if len(cs) > 1 else 0
    return " & ".join(sorted(format_constraint(c, prec) for c in cs))


def format_constraint(c: Constraint, prec: int = 0) -> str:
    """Render a constraint in the concrete ASCII syntax accepted by the parser."""
    if isinstance(c, Atom):
        return f"{format_expr(c.lhs)} {c.op} {format_expr(c.rhs)}"
    if isinstance(c, Always):
        return f"[]({format_set(c.body)})"
    if isinstance(c, Exists):
        return f"E {c.var}.({format_set(c.body)})"
    guard = " & ".join(sorted(format_constraint(g) for g in c.guard))
    body = next(iter(c.body)) if len(c.body) == 1 else None
    rhs = format_constraint(body, 1) if body is not None and not isinstance(body, Implies) \
        else f"({format_set(c.body)})"
    s = f"{guard} => {rhs}"
    return f"({s})" if prec > 0 else s
