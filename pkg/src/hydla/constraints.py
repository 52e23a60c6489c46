"""Time-indexed constraint sets: box closure, Skolemization and the Q-store."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple

from .ast import (Always, Atom, BinOp, Constraint, Exists, HydlaError, Implies, Neg,
                  Num, Var, rename)
from .trajectory import relop_holds


@dataclass(frozen=True, order=True)
class Span:
    """A time point (``hi is lo``) or an open interval (lo, hi); ``hi=None`` is unbounded."""

    lo: Fraction
    hi: Optional[Fraction]
    point: bool

    @classmethod
    def at(cls, t) -> "Span":
        t = Fraction(t)
        return cls(t, t, True)

    @classmethod
    def open(cls, lo, hi=None) -> "Span":
        return cls(Fraction(lo), None if hi is None else Fraction(hi), False)

    def sort_key(self):
        return (self.lo, 0 if self.point else 1)

    def contains(self, t) -> bool:
        if self.point:
            return t == self.lo
        return self.lo < t and (self.hi is None or t < self.hi)

    def __str__(self):
        if self.point:
            return f"{{{self.lo}}}"
        return f"({self.lo}, {'inf' if self.hi is None else self.hi})"


def unfold(members: Iterable[Constraint]) -> Tuple[FrozenSet[Constraint], FrozenSet[Constraint]]:
    """Close a set under the box rule at a single instant.

    Returns ``(now, later)``: everything holding at the instant, and the
    members propagated by boxes to every later instant.
    """
    now = set(members)
    later = set()
    work = [c for c in now if isinstance(c, Always)]
    while work:
        box = work.pop()
        for b in box.body:
            later.add(b)
            if b not in now:
                now.add(b)
                if isinstance(b, Always):
                    work.append(b)
    return frozenset(now), frozenset(later)


class TimedConstraintSet:
    """A constraint set as a function of time, stored as alternating pieces."""

    def __init__(self, pieces: Iterable[Tuple[Span, Iterable[Constraint]]] = ()):
        self.pieces: List[Tuple[Span, FrozenSet[Constraint]]] = sorted(
            ((s, frozenset(c)) for s, c in pieces), key=lambda p: p[0].sort_key())

    @classmethod
    def from_constraint(cls, c: Iterable[Constraint], horizon=None) -> "TimedConstraintSet":
        """Embed a program constraint: C at time 0, empty afterwards."""
        return cls([(Span.at(0), c), (Span.open(0, horizon), ())])

    def at(self, t) -> FrozenSet[Constraint]:
        for span, cs in self.pieces:
            if span.contains(t):
                return cs
        return frozenset()

    def spans(self) -> List[Span]:
        return [s for s, _ in self.pieces]

    def refine(self, spans: Iterable[Span]) -> "TimedConstraintSet":
        """Re-cut onto a finer partition (each new span inside one old piece)."""
        out = []
        for s in spans:
            probe = s.lo if s.point else (s.lo + (s.hi if s.hi is not None else s.lo + 2)) / 2
            out.append((s, self.at(probe)))
        return TimedConstraintSet(out)

    def __eq__(self, other):
        return isinstance(other, TimedConstraintSet) and self.pieces == other.pieces

    def __le__(self, other: "TimedConstraintSet") -> bool:
        """Pointwise inclusion, compared on the union of both partitions."""
        for span in _common_spans(self, other):
            probe = span.lo if span.point else (span.lo + (span.hi if span.hi is not None else span.lo + 2)) / 2
            if not self.at(probe) <= other.at(probe):
                return False
        return True

    def __repr__(self):
        return "TimedConstraintSet(" + ", ".join(
            f"{s}: {sorted(map(str, c))}" for s, c in self.pieces) + ")"


def _common_spans(a: TimedConstraintSet, b: TimedConstraintSet) -> List[Span]:
    cuts = set()
    for tcs in (a, b):
        for s, _ in tcs.pieces:
            cuts.add(s.lo)
            if s.hi is not None:
                cuts.add(s.hi)
    cuts = sorted(cuts)
    spans = []
    for i, t in enumerate(cuts):
        spans.append(Span.at(t))
        spans.append(Span.open(t, cuts[i + 1] if i + 1 < len(cuts) else None))
    return spans


def box_closure(c: TimedConstraintSet) -> TimedConstraintSet:
    """Smallest pointwise superset closed under the box rule."""
    carry: set = set()
    out = []
    for span, members in c.pieces:
        now, later = unfold(set(members) | carry)
        out.append((span, now))
        carry |= later
    return TimedConstraintSet(out)


# -- Skolemization ---------------------------------------------------------------------

@dataclass
class SkolemContext:
    counter: int = 0
    names: Dict[tuple, str] = field(default_factory=dict)
    reserved: set = field(default_factory=set)

    def fresh(self, var: str, t, key=None) -> str:
        k = (var, Fraction(t), key)
        if k not in self.names:
            while True:
                self.counter += 1
                name = f"{var}#{self.counter}"
                if name not in self.reserved:
                    break
            self.names[k] = name
            self.reserved.add(name)
        return self.names[k]

    def copy(self) -> "SkolemContext":
        return SkolemContext(self.counter, dict(self.names), set(self.reserved))


def skolemize(c: Constraint, t, ctx: SkolemContext, key=None) -> FrozenSet[Constraint]:
    """Eliminate existentials not guarded by a further conditional.

    Returns a set because ``E x.B`` becomes the members of B.
    """
    if isinstance(c, Exists):
        name = ctx.fresh(c.var, t, (key, c))
        out = set()
        for b in c.body:
            out |= skolemize(rename(b, c.var, name), t, ctx, key)
        return frozenset(out)
    if isinstance(c, Always):
        body = set()
        for b in c.body:
            body |= skolemize(b, t, ctx, key)
        return frozenset({Always(frozenset(body))})
    return frozenset({c})


def skolemize_set(cs: Iterable[Constraint], t, ctx: SkolemContext, key=None) -> FrozenSet[Constraint]:
    out = set()
    for c in cs:
        out |= skolemize(c, t, ctx, key)
    return frozenset(out)


def has_exists(cs: Iterable[Constraint]) -> bool:
    for c in cs:
        if isinstance(c, Exists):
            return True
        if isinstance(c, Always) and has_exists(c.body):
            return True
    return False


# -- evaluation --------------------------------------------------------------------------

Valuation = Mapping[Tuple[str, int, bool], Fraction]


def eval_expr(e, valuation: Valuation) -> Fraction:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        key = (e.name, e.order, e.left)
        if key not in valuation:
            raise HydlaError(f"unbound {e.name}{chr(39) * e.order}{'-' if e.left else ''}: "
                             "program references an undefined trajectory value")
        return valuation[key]
    if isinstance(e, Neg):
        return -eval_expr(e.arg, valuation)
    a, b = eval_expr(e.left, valuation), eval_expr(e.right, valuation)
    return {"+": a + b, "-": a - b, "*": a * b}[e.op] if e.op != "/" else a / b


def atom_holds(atom: Atom, valuation: Valuation) -> bool:
    return relop_holds(eval_expr(atom.lhs, valuation) - eval_expr(atom.rhs, valuation), atom.op)


def entails_guard(valuation: Valuation, guard: Iterable[Atom]) -> bool:
    """Exact truth of a guard conjunction under a valuation."""
    return all(atom_holds(a, valuation) for a in guard)


# -- Q-store -------------------------------------------------------------------------------

class QStore:
    """Per-module activation history; ``timed(m)`` gives the closed set Q(m)."""

    def __init__(self, ds: Mapping[str, FrozenSet[Constraint]] = None, ctx: SkolemContext = None):
        self.ctx = ctx or SkolemContext()
        self.raw: Dict[str, List[Tuple[Span, FrozenSet[Constraint]]]] = {}
        self.ds = dict(ds or {})
        for m, c in self.ds.items():
            self.raw[m] = [(Span.at(0), skolemize_set(c, 0, self.ctx, m))]

    def copy(self) -> "QStore":
        q = QStore.__new__(QStore)
        q.ctx = self.ctx.copy()
        q.raw = {m: list(v) for m, v in self.raw.items()}
        q.ds = dict(self.ds)
        return q

    def add(self, m: str, span: Span, members: Iterable[Constraint]):
        self.raw.setdefault(m, []).append((span, frozenset(members)))

    def timed(self, m: str, cuts: Iterable[Span] = None) -> TimedConstraintSet:
        raw = self.raw.get(m, [])
        spans = set(cuts or ())
        for s, _ in raw:
            spans.add(s)
        tcs_spans = _common_spans(TimedConstraintSet([(s, ()) for s in spans]),
                                  TimedConstraintSet())
        pieces = []
        for span in tcs_spans:
            members = set()
            for s, cs in raw:
                if s == span or (not s.point and not span.point and s.lo <= span.lo
                                 and (s.hi is None or (span.hi is not None and span.hi <= s.hi))):
                    members |= cs
            pieces.append((span, members))
        return box_closure(TimedConstraintSet(pieces))

    def active(self, m: str, t) -> FrozenSet[Constraint]:
        return self.timed(m).at(t)


def expand_consequent(q: QStore, m: str, guard, body, t) -> QStore:
    """Record the consequent of an entailed conditional of module ``m`` at time ``t``."""
    out = q.copy()
    out.add(m, Span.at(t), skolemize_set(body, t, out.ctx, m))
    return out
