"""Exact piecewise-polynomial trajectories and real-root isolation.

Polynomials have ``Fraction`` coefficients stored lowest degree first and
are always in local time (tau = t - segment start).
"""
from __future__ import annotations

import bisect
from math import lcm
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .ast import HydlaError, UnsupportedError

DEGREE_CAP = 16
ROOT_WIDTH = Fraction(1, 10 ** 9)


class Poly:
    __slots__ = ("c",)

    def __init__(self, coeffs: Sequence = ()):
        c = [Fraction(x) for x in coeffs]
        while c and c[-1] == 0:
            c.pop()
        self.c = tuple(c)

    @classmethod
    def const(cls, v) -> "Poly":
        return cls((v,))

    @property
    def degree(self) -> int:
        return len(self.c) - 1  # zero polynomial has degree -1

    def is_zero(self) -> bool:
        return not self.c

    def is_const(self) -> bool:
        return len(self.c) <= 1

    def const_value(self) -> Fraction:
        return self.c[0] if self.c else Fraction(0)

    def __call__(self, x) -> Fraction:
        acc = Fraction(0)
        for a in reversed(self.c):
            acc = acc * x + a
        return acc

    def __eq__(self, other):
        if not isinstance(other, Poly):
            other = Poly.const(other)
        return self.c == other.c

    def __hash__(self):
        return hash(self.c)

    def __repr__(self):
        return f"Poly({[str(x) for x in self.c]})"

    def __add__(self, other):
        other = other if isinstance(other, Poly) else Poly.const(other)
        n = max(len(self.c), len(other.c))
        a = self.c + (Fraction(0),) * (n - len(self.c))
        b = other.c + (Fraction(0),) * (n - len(other.c))
        return Poly([x + y for x, y in zip(a, b)])

    __radd__ = __add__

    def __neg__(self):
        return Poly([-x for x in self.c])

    def __sub__(self, other):
        return self + (-(other if isinstance(other, Poly) else Poly.const(other)))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Poly):
            return Poly([x * other for x in self.c])
        if not self.c or not other.c:
            return Poly()
        out = [Fraction(0)] * (len(self.c) + len(other.c) - 1)
        for i, x in enumerate(self.c):
            if x:
                for j, y in enumerate(other.c):
                    out[i + j] += x * y
        return Poly(out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        out = Poly.const(1)
        for _ in range(k):
            out = out * self
        return out

    def deriv(self, k: int = 1) -> "Poly":
        c = list(self.c)
        for _ in range(k):
            c = [i * x for i, x in enumerate(c)][1:]
        return Poly(c)

    def integrate(self, init=0) -> "Poly":
        return Poly([Fraction(init)] + [x / (i + 1) for i, x in enumerate(self.c)])

    def divmod(self, other: "Poly") -> Tuple["Poly", "Poly"]:
        if other.is_zero():
            raise ZeroDivisionError("polynomial division by zero")
        r = list(self.c)
        q = [Fraction(0)] * max(len(r) - len(other.c) + 1, 0)
        lead = other.c[-1]
        while len(r) >= len(other.c) and r:
            k = len(r) - len(other.c)
            f = r[-1] / lead
            q[k] = f
            for i, y in enumerate(other.c):
                r[i + k] -= f * y
            r.pop()
            while r and r[-1] == 0:
                r.pop()
        return Poly(q), Poly(r)

    def shift(self, a) -> "Poly":
        """Return p(a + u) as a polynomial in u (Taylor shift)."""
        out = Poly()
        for x in reversed(self.c):
            out = out * Poly((a, 1)) + x
        return out

    def monic(self) -> "Poly":
        return Poly([x / self.c[-1] for x in self.c]) if self.c else self

    def right_sign(self, at=0) -> int:
        """Sign of the polynomial on an immediate right-neighbourhood of ``at``."""
        p = self if at == 0 else self.shift(at)
        for x in p.c:
            if x:
                return 1 if x > 0 else -1
        return 0


def poly_gcd(a: Poly, b: Poly) -> Poly:
    while not b.is_zero():
        a, b = b, a.divmod(b)[1]
    return a.monic()


def squarefree(p: Poly) -> Poly:
    if p.degree < 1:
        return p
    g = poly_gcd(p, p.deriv())
    return p.divmod(g)[0].monic() if g.degree >= 1 else p.monic()


def sturm_sequence(p: Poly) -> List[Poly]:
    seq = [p, p.deriv()]
    while not seq[-1].is_zero():
        r = seq[-2].divmod(seq[-1])[1]
        if r.is_zero():
            break
        seq.append(-r)
    return seq


def _sign_changes(seq: List[Poly], x) -> int:
    signs = [s for s in (q(x) for q in seq) if s != 0]
    return sum(1 for a, b in zip(signs, signs[1:]) if (a > 0) != (b > 0))


def count_roots(seq: List[Poly], a, b) -> int:
    """Number of distinct roots in (a, b] for the squarefree head of ``seq``."""
    return _sign_changes(seq, a) - _sign_changes(seq, b)


def root_bound(p: Poly) -> Fraction:
    lead = abs(p.c[-1])
    return 1 + max((abs(x) / lead for x in p.c[:-1]), default=Fraction(0))


@dataclass(frozen=True)
class IrrationalRoot:
    """An irrational root known only by an isolating interval (lo, hi)."""
    lo: Fraction
    hi: Fraction
    irrational: bool = True

    def __float__(self):
        return float((self.lo + self.hi) / 2)


@dataclass(frozen=True)
class _Isolated:
    lo: Fraction
    hi: Fraction
    exact: Optional[Fraction]

    @property
    def key(self):
        return self.exact if self.exact is not None else self.lo


def _rational_in(p: Poly, lo: Fraction, hi: Fraction, seq) -> Tuple[Fraction, Fraction, Optional[Fraction]]:
    """Refine an isolating interval; return the root exactly when it is rational.

    ``p`` is monic, so after scaling by the lcm of denominators the leading
    coefficient bounds every rational root's denominator.  Once the interval
    is narrower than 1/(2 lead^2) at most one such fraction fits inside.
    """
    lead = lcm(*(x.denominator for x in p.c))
    target = min(Fraction(1, 2 * lead * lead), ROOT_WIDTH)
    while hi - lo > target:
        mid = (lo + hi) / 2
        if p(mid) == 0:
            return mid, mid, mid
        if count_roots(seq, lo, mid) == 1:
            hi = mid
        else:
            lo = mid
    if p(hi) == 0:
        return hi, hi, hi
    cand = ((lo + hi) / 2).limit_denominator(lead)
    if lo < cand <= hi and p(cand) == 0:
        return cand, cand, cand
    return lo, hi, None


def isolate_roots(p: Poly, lo, hi) -> List[_Isolated]:
    """Distinct real roots of ``p`` in (lo, hi], ascending."""
    p = squarefree(p)
    if p.degree < 1:
        return []
    seq = sturm_sequence(p)
    lo, hi = Fraction(lo), Fraction(hi)
    out = []
    stack = [(lo, hi)]
    while stack:
        a, b = stack.pop()
        n = count_roots(seq, a, b)
        if n == 0:
            continue
        if n == 1:
            x, y, exact = _rational_in(p, a, b, seq)
            out.append(_Isolated(x, y, exact))
            continue
        mid = (a + b) / 2
        stack.append((mid, b))
        stack.append((a, mid))
    out.sort(key=lambda r: r.lo)
    return out


_ALWAYS = "identically-true"
IDENTICALLY_TRUE = _ALWAYS

_REL = {
    "=": lambda s: s == 0, "!=": lambda s: s != 0, "<": lambda s: s < 0,
    "<=": lambda s: s <= 0, ">": lambda s: s > 0, ">=": lambda s: s >= 0,
}


def relop_holds(value, relop: str) -> bool:
    return _REL[relop](value)


def earliest_change(atoms: Sequence[Tuple[Poly, str]], frm=0, until=None):
    """Earliest t > frm at which the conjunction of ``p relop 0`` changes truth.

    The conjunction's truth on an immediate right-neighbourhood of ``frm`` is
    the reference; the result is the first root (of any atom polynomial) at
    which, or just after which, the truth differs.  Returns ``None`` when no
    change happens (before ``until`` if given), a ``Fraction`` for rational
    times, or an ``IrrationalRoot``.
    """
    frm = Fraction(frm)
    atoms = [(p, r) for p, r in atoms]
    live = [p for p, _ in atoms if p.degree >= 1]
    if not live:
        return None
    truth0 = all(relop_holds(p.right_sign(frm), r) for p, r in atoms)
    prod = Poly.const(1)
    for p in live:
        prod = prod * squarefree(p)
    hi = frm + root_bound(squarefree(prod)) + 1 if until is None else Fraction(until)
    if hi <= frm:
        return None
    seqs = [sturm_sequence(squarefree(p)) if p.degree >= 1 else None for p, _ in atoms]
    for root in isolate_roots(prod, frm, hi):
        if root.exact is not None:
            r = root.exact
            at = all(relop_holds(p(r), rel) for p, rel in atoms)
            after = all(relop_holds(p.right_sign(r), rel) for p, rel in atoms)
        else:
            at_vals = []
            for (p, rel), seq in zip(atoms, seqs):
                vanishes = seq is not None and count_roots(seq, root.lo, root.hi) > 0
                at_vals.append(relop_holds(0 if vanishes else p(root.hi), rel))
            at = all(at_vals)
            after = all(relop_holds(p(root.hi), rel) for p, rel in atoms)
        if at != truth0 or after != truth0:
            return r if root.exact is not None else IrrationalRoot(root.lo, root.hi)
    return None


def earliest_sign_change(p: Poly, frm=0, relop: str = "=", until=None):
    """Earliest t > frm where the truth of ``p(t) relop 0`` changes.

    A zero polynomial under ``=`` yields the ``IDENTICALLY_TRUE`` sentinel.
    """
    if p.is_zero() and relop == "=":
        return IDENTICALLY_TRUE
    return earliest_change([(p, relop)], frm, until)


def integrate_poly(p: Poly, init=0) -> Poly:
    out = p.integrate(init)
    if out.degree > DEGREE_CAP:
        raise UnsupportedError(f"trajectory polynomial degree {out.degree} exceeds cap {DEGREE_CAP}")
    return out


# -- piecewise trajectories ------------------------------------------------------

@dataclass
class Segment:
    start: Fraction
    end: Optional[Fraction]  # None: open-ended
    poly: Poly

    @property
    def value_at_start(self) -> Fraction:
        return self.poly(0)


@dataclass
class VarTrajectory:
    segments: List[Segment] = field(default_factory=list)
    points: Dict[Fraction, Dict[int, Fraction]] = field(default_factory=dict)

    def segment_covering(self, t) -> Optional[Segment]:
        """Segment whose open interior contains ``t``."""
        for s in self.segments:
            if s.start < t and (s.end is None or t < s.end):
                return s
        return None

    def segment_starting(self, t) -> Optional[Segment]:
        for s in self.segments:
            if s.start == t:
                return s
        return None

    def segment_ending(self, t) -> Optional[Segment]:
        for s in self.segments:
            if s.end == t or (s.start < t and (s.end is None or t < s.end)):
                return s
        return None


class PiecewisePoly:
    """Per-variable piecewise polynomials with explicit point values."""

    def __init__(self):
        self.vars: Dict[str, VarTrajectory] = {}

    def var(self, name: str) -> VarTrajectory:
        return self.vars.setdefault(name, VarTrajectory())

    def add_segment(self, name: str, start, end, poly: Poly):
        vt = self.var(name)
        seg = Segment(Fraction(start), None if end is None else Fraction(end), poly)
        keys = [s.start for s in vt.segments]
        vt.segments.insert(bisect.bisect(keys, seg.start), seg)

    def set_point(self, name: str, t, order: int, value):
        self.var(name).points.setdefault(Fraction(t), {})[order] = Fraction(value)

    def breakpoints(self) -> List[Fraction]:
        ts = set()
        for vt in self.vars.values():
            ts.update(vt.points)
            for s in vt.segments:
                ts.add(s.start)
                if s.end is not None:
                    ts.add(s.end)
        return sorted(ts)

    def eval(self, name: str, order: int, t):
        t = Fraction(t)
        vt = self.vars.get(name)
        if vt is None:
            raise HydlaError(f"no trajectory for variable {name!r}")
        if t in vt.points and order in vt.points[t]:
            return vt.points[t][order]
        seg = vt.segment_covering(t)
        if seg is not None:
            return seg.poly.deriv(order)(t - seg.start)
        after = vt.segment_starting(t)
        before = vt.segment_ending(t) if t > 0 else None
        if after is None and before is None:
            raise HydlaError(f"{name} is not defined at t={t}")
        vals = set()
        if after is not None:
            vals.add(after.poly.deriv(order)(0))
        if before is not None:
            vals.add(before.poly.deriv(order)(t - before.start))
        if len(vals) == 1 and (order == 0 or (after is not None and before is not None)
                               or t == 0):
            return vals.pop()
        raise HydlaError(f"{name}{chr(39) * order} is not differentiable here (t={t})")

    def left_limit(self, name: str, order: int, t):
        t = Fraction(t)
        if t <= 0:
            raise HydlaError("no left limit at the initial time")
        vt = self.vars.get(name)
        seg = vt.segment_ending(t) if vt is not None else None
        if seg is None:
            raise HydlaError(f"{name} has no left limit at t={t}")
        return seg.poly.deriv(order)(t - seg.start)

    def right_limit(self, name: str, order: int, t):
        vt = self.vars.get(name)
        seg = vt.segment_starting(Fraction(t)) if vt is not None else None
        if seg is None:
            seg = vt.segment_covering(Fraction(t)) if vt is not None else None
            if seg is None:
                raise HydlaError(f"{name} has no right limit at t={t}")
        return seg.poly.deriv(order)(Fraction(t) - seg.start)
