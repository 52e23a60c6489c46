"""Consistency checking of candidate module sets at a point or over an interval.

Equalities are solved by substitution: an equation that is linear in a
single unknown fixes that unknown, repeatedly, until nothing changes.  In
interval problems the unknowns are polynomials in local time and solving
``x^(k) = p`` also fixes every other derivative order of ``x`` (lower
orders by integration from the point values at the interval start).

Conditionals are handled by a search over guard hypotheses: a guard that
the current partial solution already decides is just evaluated; otherwise
the search branches on "guard holds" (its atoms become constraints and the
consequent is expanded) and "atom i fails" (the negated atom becomes a
constraint).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

from .algebra import MPoly, Symbol, atom_to_mpoly
from .ast import Atom, HydlaError, Implies, UnsupportedError, is_differential
from .constraints import SkolemContext, has_exists, skolemize_set, unfold
from .poset import ModuleSetPoset
from .trajectory import Poly, integrate_poly, isolate_roots, relop_holds, root_bound

CONSISTENT = "consistent"
INCONSISTENT = "inconsistent"
UNDERDETERMINED = "underdetermined"
UNSUPPORTED = "unsupported"


@dataclass
class Outcome:
    modules: FrozenSet[str]
    status: str
    model: Dict = field(default_factory=dict)
    sets: Dict[str, FrozenSet] = field(default_factory=dict)
    additions: Dict[str, FrozenSet] = field(default_factory=dict)
    reason: str = ""


class _Conflict(Exception):
    pass


class _Undefined(Exception):
    pass


@lru_cache(maxsize=None)
def _mpoly(atom: Atom, merge_left: bool) -> MPoly:
    return atom_to_mpoly(atom, merge_left)


def _sym_str(s) -> str:
    name, order = s[0], s[1]
    left = len(s) > 2 and s[2]
    return name + "'" * order + ("-" if left else "")


@dataclass
class _Node:
    sets: Dict[str, FrozenSet]
    hyps: Tuple[Tuple[str, Atom], ...] = ()
    decided: FrozenSet = frozenset()
    additions: Dict[str, FrozenSet] = field(default_factory=dict)


class _Problem:
    """Shared search machinery; subclasses define the time domain."""

    merge_left = False

    def __init__(self, sets: Mapping[str, FrozenSet], ctx: SkolemContext = None,
                 cont_modules: Sequence[str] = ()):
        self.base_sets = {m: frozenset(s) for m, s in sets.items()}
        self.ctx = ctx or SkolemContext()
        self.cont_modules = set(cont_modules)
        self.critical: List[Poly] = []

    # hooks ---------------------------------------------------------------
    def prepare(self, atom: Atom, origin: str) -> MPoly:
        return _mpoly(atom, self.merge_left)

    def implicit(self, atoms) -> List[Tuple[MPoly, str]]:
        return []

    def assign(self, known, sym, value: Poly):
        if sym in known:
            if known[sym] != value:
                raise _Conflict(f"{_sym_str(sym)} cannot be both {_fmt(known[sym])} and {_fmt(value)}")
            return
        known[sym] = value

    def state_symbols(self, atoms) -> set:
        """Unknowns that must be fixed even if no atom mentions them."""
        return set()

    def check_truth(self, p: Poly, relop: str) -> Optional[bool]:
        raise NotImplementedError

    def finish(self, known, missing) -> None:
        pass

    def activation_time(self):
        raise NotImplementedError

    def expand(self, module: str, cond: Implies) -> FrozenSet:
        return skolemize_set(cond.body, self.activation_time(), self.ctx, module)

    # solving ----------------------------------------------------------------
    def _collect(self, modules, node: _Node):
        atoms = []
        for m in sorted(modules):
            for c in node.sets.get(m, ()):
                if isinstance(c, Atom):
                    atoms.append((m, c))
        return atoms + list(node.hyps)

    def solve(self, modules, node: _Node, final: bool = False):
        """Returns (status, known, reason)."""
        eqs: List[Tuple[MPoly, str]] = []
        checks: List[Tuple[MPoly, str, str]] = []
        required = set()
        atoms = self._collect(modules, node)
        try:
            for m, a in atoms:
                try:
                    mp = self.prepare(a, m)
                except _Undefined:
                    continue
                origin = f"{a} [{m}]"
                required |= mp.symbols()
                if a.op == "=":
                    eqs.append((mp, origin))
                else:
                    checks.append((mp, a.op, origin))
            eqs.extend(self.implicit([(m, a) for m, a in atoms]))
            required |= self.state_symbols(atoms)
        except UnsupportedError as exc:
            return UNSUPPORTED, {}, str(exc)
        known: Dict = {}
        try:
            eqs = self._substitute(eqs, known)
            if final:
                missing = {s for s in required if s not in known}
                self.finish(known, missing)
                eqs = self._substitute(eqs, known)
        except _Conflict as exc:
            return INCONSISTENT, known, str(exc)
        except UnsupportedError as exc:
            return UNSUPPORTED, known, str(exc)
        residual_checks = []
        for mp, rel, origin in checks:
            s = mp.subs(known)
            if s.symbols():
                residual_checks.append((s, rel, origin))
                continue
            truth = self.check_truth(s.const_poly(), rel)
            if truth is False:
                return INCONSISTENT, known, f"{origin} violated"
        if not final:
            return CONSISTENT, known, ""
        residual = [(mp.subs(known), "=", o) for mp, o in eqs] + residual_checks
        free = sorted({s for s in required if s not in known}, key=str)
        return self.classify_residual(known, residual, free)

    def _substitute(self, eqs, known):
        while True:
            progress = False
            remaining = []
            for mp, origin in eqs:
                s = mp.subs(known)
                syms = s.symbols()
                if not syms:
                    if self.check_truth(s.const_poly(), "=") is False:
                        raise _Conflict(f"{origin} violated")
                    continue
                if len(syms) == 1:
                    sym = next(iter(syms))
                    lin = s.linear(sym)
                    if lin is not None:
                        a, b = lin
                        if a.is_const():
                            self.assign(known, sym, b * (-1 / a.const_value()))
                            progress = True
                            continue
                        q, r = (-b).divmod(a)
                        if r.is_zero():
                            self.assign(known, sym, q)
                            progress = True
                            continue
                remaining.append((mp, origin))
            eqs = remaining
            if not progress:
                return eqs

    def classify_residual(self, known, residual, free):
        if residual or free:
            names = ", ".join(_sym_str(s) for s in free) or "residual constraints"
            return UNDERDETERMINED, known, f"underdetermined at t={self.activation_time()}: free {names}"
        return CONSISTENT, known, ""

    # guard search -------------------------------------------------------------
    def guard_truth(self, modules, node: _Node, known, cond: Implies) -> Optional[bool]:
        """Decide a guard from the partial solution, or None when it must be branched."""
        truths = []
        for a in cond.guard:
            try:
                mp = self.prepare(a, "guard")
            except _Undefined:
                return False
            s = mp.subs(known)
            if s.symbols():
                return None
            truths.append(self.check_truth(s.const_poly(), a.op))
        if any(t is None for t in truths):
            return None
        return all(truths)

    def evaluate(self, modules) -> List[Outcome]:
        """All solutions of candidate set ``modules`` (one per guard-hypothesis path)."""
        modules = frozenset(modules)
        root = _Node(sets=dict(self.base_sets))
        results: List[Outcome] = []
        self._search(modules, root, results)
        return results

    def _search(self, modules, node: _Node, results: List[Outcome]):
        status, known, reason = self.solve(modules, node)
        if status != CONSISTENT:
            results.append(Outcome(modules, status, reason=reason))
            return
        pending = [(m, c) for m in sorted(modules) for c in node.sets.get(m, ())
                   if isinstance(c, Implies) and (m, c) not in node.decided]
        if not pending:
            status, known, reason = self.solve(modules, node, final=True)
            results.append(Outcome(modules, status, model=known, sets=dict(node.sets),
                                   additions=dict(node.additions), reason=reason))
            return
        pending.sort(key=lambda mc: (mc[0], str(mc[1])))
        m, cond = pending[0]
        truth = self.guard_truth(modules, node, known, cond)
        decided = node.decided | {(m, cond)}
        if truth is not False:
            try:
                child = self._fire(node, m, cond, decided, truth is None)
            except UnsupportedError as exc:
                results.append(Outcome(modules, UNSUPPORTED, reason=str(exc)))
                return
            self._search(modules, child, results)
        if truth is not True:
            if truth is None:
                for a in sorted(cond.guard, key=str):
                    self._search(modules, _Node(node.sets, node.hyps + ((m, a.negated()),),
                                                decided, node.additions), results)
            else:
                self._search(modules, _Node(node.sets, node.hyps, decided, node.additions), results)

    def _fire(self, node: _Node, m: str, cond: Implies, decided, add_guard: bool) -> _Node:
        body = self.expand(m, cond)
        now, _ = unfold(node.sets.get(m, frozenset()) | body)
        sets = dict(node.sets)
        sets[m] = now
        additions = dict(node.additions)
        additions[m] = additions.get(m, frozenset()) | body
        hyps = node.hyps + tuple((m, a) for a in sorted(cond.guard, key=str)) if add_guard else node.hyps
        return _Node(sets, hyps, decided, additions)


def _fmt(p: Poly) -> str:
    if p.is_const():
        return str(p.const_value())
    return "polynomial " + " + ".join(f"{c}*t^{i}" for i, c in enumerate(p.c) if c)


class PointProblem(_Problem):
    """Instantiation of a candidate at time ``t`` with frozen left limits.

    ``left`` maps (name, order) to the left-limit value (a constant Poly or a
    Fraction).  ``sat`` switches residual handling from "underdetermined" to
    an exact satisfiability decision (used by the checker).
    """

    def __init__(self, t, sets, left: Mapping, ctx=None, cont_modules=(), sat=False, generic=False):
        super().__init__(sets, ctx, cont_modules)
        self.t = Fraction(t)
        self.left = {k: (v if isinstance(v, Poly) else Poly.const(v)) for k, v in left.items()}
        self.sat = sat
        self.generic = generic

    def activation_time(self):
        return self.t

    def prepare(self, atom, origin):
        mp = _mpoly(atom, False)
        subst = {}
        for s in mp.symbols():
            if s[2]:
                key = (s[0], s[1])
                if key not in self.left:
                    if origin in self.cont_modules or origin == "guard":
                        raise _Undefined()
                    raise UnsupportedError(f"left limit {_sym_str(s)} undefined at t={self.t}")
                subst[s] = self.left[key]
        return mp.subs(subst) if subst else mp

    def implicit(self, atoms):
        out = []
        seen = set()
        for m, a in atoms:
            if is_differential(a):
                x, n = a.lhs.name, a.lhs.order
                for k in range(n + 1):
                    if (x, k) in self.left and (x, k) not in seen:
                        seen.add((x, k))
                        out.append((MPoly.symbol((x, k, False)) - MPoly.const(self.left[(x, k)]),
                                    f"differentiability of {x} at t={self.t} [{m}]"))
        return out

    def state_symbols(self, atoms):
        # a derivative constraint needs the lower orders as the state to integrate from
        return {(a.lhs.name, k, False) for _, a in atoms if is_differential(a)
                for k in range(a.lhs.order)}

    def check_truth(self, p: Poly, relop):
        if not p.is_const():
            self.critical.append(p)
            return None
        return relop_holds(p.const_value(), relop)

    def guard_truth(self, modules, node, known, cond):
        if self.generic:
            for a in cond.guard:
                try:
                    s = self.prepare(a, "guard").subs(known)
                except _Undefined:
                    return False
                if not s.symbols() and not s.const_poly().is_const():
                    self.critical.append(s.const_poly())
            return None
        return super().guard_truth(modules, node, known, cond)

    def classify_residual(self, known, residual, free):
        if self.generic:
            for mp, _, _ in residual:
                self.critical.extend(c for c in mp.terms.values() if not c.is_const())
            return CONSISTENT, known, ""
        if not self.sat:
            return super().classify_residual(known, residual, free)
        return decide_residual(known, residual)


class IntervalProblem(_Problem):
    """A candidate on the open interval right after ``t0``.

    ``init`` maps (name, order) to the point values at ``t0``; ``right_cont``
    maps each right-continuous variable to the derivative orders covered.
    A right-continuous variable that nothing defines keeps its highest
    covered order constant (frame hold).
    """

    merge_left = True

    def __init__(self, t0, sets, init: Mapping, ctx=None, cont_modules=(),
                 right_cont: Mapping[str, Sequence[int]] = None, max_order: Mapping[str, int] = None):
        super().__init__(sets, ctx, cont_modules)
        self.t0 = Fraction(t0)
        self.init = dict(init)
        self.right_cont = {x: tuple(ks) for x, ks in (right_cont or {}).items() if ks}
        self.max_order = dict(max_order or {})
        self.missing_init = set()

    def activation_time(self):
        return self.t0

    def expand(self, module, cond):
        if has_exists(cond.body):
            raise UnsupportedError(f"existential consequent activated over an interval after t={self.t0}")
        return super().expand(module, cond)

    def check_truth(self, p: Poly, relop):
        return relop_holds(p.right_sign(0), relop)

    def assign(self, known, sym, value):
        x, k = sym[0], sym[1]
        top = max(self.max_order.get(x, self.max_order.get(x.split("#")[0], 0)), k) + 1
        for j in range(k, top + 1):
            super().assign(known, (x, j, False), value.deriv(j - k))
        cur = value
        for j in range(k - 1, -1, -1):
            key = (x, j, False)
            if key in known:
                if known[key].deriv() != cur:
                    raise _Conflict(f"{_sym_str(key)} inconsistent with its derivative")
                cur = known[key]
                continue
            if (x, j) not in self.init:
                self.missing_init.add((x, j))
                return
            cur = integrate_poly(cur, self.init[(x, j)])
            known[key] = cur

    def finish(self, known, missing):
        for x, orders in sorted(self.right_cont.items()):
            top = max(orders)
            if any(s[0] == x for s in known) or not any(s[0] == x for s in missing):
                continue
            if (x, top) in self.init:
                self.assign(known, (x, top, False), Poly.const(self.init[(x, top)]))
        for x, orders in sorted(self.right_cont.items()):
            for k in sorted(orders):
                key = (x, k, False)
                if key in known and (x, k) in self.init and known[key](0) != self.init[(x, k)]:
                    raise _Conflict(f"right continuity of {_sym_str((x, k))} violated at t={self.t0}: "
                                    f"{known[key](0)} after, {self.init[(x, k)]} at the point")

    def classify_residual(self, known, residual, free):
        if self.missing_init or residual or free:
            free = sorted(set(free) | {(x, k, False) for x, k in self.missing_init}, key=str)
            names = ", ".join(_sym_str(s) for s in free) or "residual constraints"
            return UNDERDETERMINED, known, f"underdetermined after t={self.t0}: free {names}"
        return CONSISTENT, known, ""


def decide_residual(known, residual):
    """Exact satisfiability of residual constraints, each over a single unknown."""
    groups: Dict = {}
    for mp, rel, origin in residual:
        syms = mp.symbols()
        if len(syms) != 1:
            return UNSUPPORTED, known, f"residual {origin} couples several unknowns"
        s = next(iter(syms))
        p = mp.univariate(s)
        if p is None:
            return UNSUPPORTED, known, f"residual {origin} is not univariate"
        groups.setdefault(s, []).append((p, rel, origin))
    for s, items in groups.items():
        verdict = _univariate_sat(items)
        if verdict is None:
            return UNSUPPORTED, known, f"cannot decide constraints on {_sym_str(s)}"
        if not verdict:
            return INCONSISTENT, known, "no value of " + _sym_str(s) + " satisfies " + \
                "; ".join(o for _, _, o in items)
    return CONSISTENT, known, ""


def _univariate_sat(items) -> Optional[bool]:
    eqs = [p for p, rel, _ in items if rel == "=" and not p.is_zero()]
    if any(p.degree < 1 for p in eqs):
        return False
    candidates: List[Fraction] = []
    irrational = False
    if eqs:
        b = _bound(eqs[0])
        for r in isolate_roots(eqs[0], -b, b):
            if r.exact is None:
                irrational = True
            else:
                candidates.append(r.exact)
    else:
        pts = set()
        for p, _, _ in items:
            if p.degree < 1:
                continue
            b = _bound(p)
            for r in isolate_roots(p, -b, b):
                if r.exact is None:
                    irrational = True
                    pts.update((r.lo, r.hi))
                else:
                    pts.add(r.exact)
        pts = sorted(pts) or [Fraction(0)]
        candidates = pts + [pts[0] - 1, pts[-1] + 1] + [(a + b) / 2 for a, b in zip(pts, pts[1:])]
    for c in candidates:
        if all(relop_holds(p(c), rel) for p, rel, _ in items):
            return True
    return None if irrational else False


def _bound(p: Poly) -> Fraction:
    return root_bound(p) + 1 if p.degree >= 1 else Fraction(1)


# -- poset search -------------------------------------------------------------------

@dataclass
class MaximalResult:
    outcomes: List[Outcome]
    blocking: List[Outcome]
    failures: Dict[FrozenSet[str], List[Outcome]]

    @property
    def status(self) -> str:
        if any(o.status == UNSUPPORTED for o in self.blocking):
            return UNSUPPORTED
        if self.blocking:
            return UNDERDETERMINED
        return CONSISTENT if self.outcomes else INCONSISTENT


def find_maximal_consistent(ms: ModuleSetPoset, problem: _Problem) -> MaximalResult:
    """Evaluate candidates top-down and keep the maximal consistent ones.

    An element is skipped once any of its superiors is known consistent.
    Underdetermined or unsupported elements that are not dominated that way
    are reported as ``blocking``: maximality cannot be decided around them.
    """
    verdict: Dict[FrozenSet[str], str] = {}
    outcomes: List[Outcome] = []
    blocking: List[Outcome] = []
    failures: Dict[FrozenSet[str], List[Outcome]] = {}
    for e in ms.top_down():
        if any(verdict.get(s) == CONSISTENT for s in ms.superiors(e)):
            verdict[e] = "dominated"
            continue
        results = problem.evaluate(e)
        bad = [r for r in results if r.status in (UNDERDETERMINED, UNSUPPORTED)]
        good = [r for r in results if r.status == CONSISTENT]
        if bad:
            verdict[e] = bad[0].status
            blocking.append(bad[0])
        elif good:
            verdict[e] = CONSISTENT
            outcomes.extend(good)
        else:
            verdict[e] = INCONSISTENT
            failures[e] = results
    # an underdetermined superior does not block once a consistent element sits above it
    blocking = [b for b in blocking
                if not any(verdict.get(s) == CONSISTENT for s in ms.superiors(b.modules))]
    return MaximalResult(outcomes, blocking, failures)


def solve_point(problem: PointProblem, modules) -> List[Outcome]:
    """Solutions of one candidate set at a point (one per guard hypothesis path)."""
    return problem.evaluate(modules)


def solve_interval(problem: IntervalProblem, modules) -> List[Outcome]:
    """Polynomial solutions of one candidate set right after the interval start."""
    return problem.evaluate(modules)
