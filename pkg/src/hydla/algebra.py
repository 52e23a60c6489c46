"""Multivariate polynomials whose coefficients are polynomials in local time.

Symbols are ``(name, order, left)`` triples.  In point problems every
coefficient is a constant; in interval problems coefficients carry tau.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Dict, Mapping, Optional, Tuple

from .ast import BinOp, Neg, Num, Var
from .trajectory import Poly

Symbol = Tuple[str, int, bool]
Monomial = Tuple[Tuple[Symbol, int], ...]

_ONE: Monomial = ()


def _mono_mul(a: Monomial, b: Monomial) -> Monomial:
    d: Dict[Symbol, int] = dict(a)
    for s, e in b:
        d[s] = d.get(s, 0) + e
    return tuple(sorted(d.items()))


class MPoly:
    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[Monomial, Poly] = None):
        self.terms: Dict[Monomial, Poly] = {m: c for m, c in (terms or {}).items() if not c.is_zero()}

    @classmethod
    def const(cls, c) -> "MPoly":
        return cls({_ONE: c if isinstance(c, Poly) else Poly.const(c)})

    @classmethod
    def symbol(cls, s: Symbol) -> "MPoly":
        return cls({((s, 1),): Poly.const(1)})

    def __add__(self, other: "MPoly") -> "MPoly":
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out[m] + c if m in out else c
        return MPoly(out)

    def __neg__(self) -> "MPoly":
        return MPoly({m: -c for m, c in self.terms.items()})

    def __sub__(self, other: "MPoly") -> "MPoly":
        return self + (-other)

    def __mul__(self, other: "MPoly") -> "MPoly":
        out: Dict[Monomial, Poly] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = _mono_mul(m1, m2)
                out[m] = out[m] + c1 * c2 if m in out else c1 * c2
        return MPoly(out)

    def symbols(self) -> set:
        return {s for m in self.terms for s, _ in m}

    def is_const(self) -> bool:
        return all(m == _ONE for m in self.terms)

    def const_poly(self) -> Poly:
        return self.terms.get(_ONE, Poly())

    def subs(self, known: Mapping[Symbol, Poly]) -> "MPoly":
        if not any(s in known for s in self.symbols()):
            return self
        out: Dict[Monomial, Poly] = {}
        for m, c in self.terms.items():
            rest = []
            for s, e in m:
                if s in known:
                    c = c * (known[s] ** e)
                else:
                    rest.append((s, e))
            key = tuple(rest)
            out[key] = out[key] + c if key in out else c
        return MPoly(out)

    def linear(self, s: Symbol) -> Optional[Tuple[Poly, Poly]]:
        """(a, b) with self == a*s + b when ``s`` is the only symbol and appears linearly."""
        a, b = Poly(), Poly()
        for m, c in self.terms.items():
            if m == _ONE:
                b = b + c
            elif m == ((s, 1),):
                a = a + c
            else:
                return None
        return (a, b) if not a.is_zero() else None

    def univariate(self, s: Symbol) -> Optional[Poly]:
        """Coefficients in ``s`` when all coefficients are constants."""
        coeffs: Dict[int, Fraction] = {}
        for m, c in self.terms.items():
            if not c.is_const():
                return None
            if m == _ONE:
                e = 0
            elif len(m) == 1 and m[0][0] == s:
                e = m[0][1]
            else:
                return None
            coeffs[e] = coeffs.get(e, Fraction(0)) + c.const_value()
        if not coeffs:
            return Poly()
        return Poly([coeffs.get(i, 0) for i in range(max(coeffs) + 1)])

    def __repr__(self):
        return f"MPoly({self.terms})"


def expr_to_mpoly(e, merge_left: bool = False) -> MPoly:
    """Translate an expression; ``merge_left`` maps x- to x (interval interiors)."""
    if isinstance(e, Num):
        return MPoly.const(e.value)
    if isinstance(e, Var):
        return MPoly.symbol((e.name, e.order, False if merge_left else e.left))
    if isinstance(e, Neg):
        return -expr_to_mpoly(e.arg, merge_left)
    a = expr_to_mpoly(e.left, merge_left)
    b = expr_to_mpoly(e.right, merge_left)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    return a * MPoly.const(1 / e.right.value)


def atom_to_mpoly(atom, merge_left: bool = False) -> MPoly:
    return expr_to_mpoly(atom.lhs, merge_left) - expr_to_mpoly(atom.rhs, merge_left)
