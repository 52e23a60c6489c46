"""Direct verification of a (trajectory, Q) pair against a program.

The time axis is cut at the certificate's event times into points and
open pieces.  On each piece the checker looks for an adopted module set E
that the trajectory satisfies, confirms that no stronger set could have
been satisfied by a trajectory with the same past, that every entailed
guard had its consequent recorded, and that Q holds nothing beyond what
the box rule and fired consequents force.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, FrozenSet, List, Optional, Tuple

from .algebra import atom_to_mpoly
from .ast import (Always, Atom, Exists, HydlaError, Implies, UnsupportedError, constraint_atoms,
                  is_differential, rename)
from .constraints import SkolemContext, Span, TimedConstraintSet, box_closure, unfold
from .solver import CONSISTENT, UNSUPPORTED, PointProblem
from .syntax import Program
from .trajectory import PiecewisePoly, Poly, isolate_roots, relop_holds


@dataclass
class Certificate:
    trajectory: PiecewisePoly
    events: List[Fraction]
    until: Fraction
    q: Optional[Dict[str, Dict[Span, FrozenSet]]] = None
    adopted: Optional[Dict[Span, FrozenSet[str]]] = None
    elided: Tuple[Span, ...] = ()
    # left limits recorded at points that follow an elided (Zeno) interval
    left: Dict[Fraction, Dict[Tuple[str, int], Fraction]] = field(default_factory=dict)


@dataclass
class Finding:
    condition: str  # "i", "ii", "s1", "s2", "s3", "iv", "unsupported" or "note"
    where: str
    message: str

    def __str__(self):
        return f"({self.condition}) at {self.where}: {self.message}"


@dataclass
class VerdictReport:
    accepted: bool
    findings: List[Finding] = field(default_factory=list)
    adopted: List[Tuple[Span, FrozenSet[str]]] = field(default_factory=list)

    def problems(self, condition: str = None) -> List[Finding]:
        return [f for f in self.findings if f.condition != "note"
                and (condition is None or f.condition == condition)]

    def summary(self) -> str:
        head = "accept" if self.accepted else "reject"
        return "\n".join([head] + [str(f) for f in self.findings])


class _Undefined(Exception):
    pass


def _pieces(events, until) -> List[Span]:
    out = []
    for i, t in enumerate(events):
        out.append(Span.at(t))
        hi = events[i + 1] if i + 1 < len(events) else until
        if hi > t:
            out.append(Span.open(t, hi))
    return out


def _sym_name(s) -> str:
    return s[0] + "'" * s[1] + ("-" if s[2] else "")


class _PieceEval:
    """Truth of atoms on one piece, evaluated at finitely many rational samples.

    On an open piece every atom becomes a polynomial in absolute time; the
    samples are the roots of those polynomials inside the piece plus one
    point in each gap, so every sign pattern that occurs is visited.
    """

    def __init__(self, traj: PiecewisePoly, span: Span, left_override=None):
        self.traj = traj
        self.left_override = left_override or {}
        self.span = span
        self.polys: Dict[Atom, Optional[object]] = {}
        self._samples: Optional[List[Fraction]] = None

    def _point_symbol(self, s) -> Fraction:
        name, k, left = s
        t = self.span.lo
        try:
            if left:
                if (name, k) in self.left_override:
                    return self.left_override[(name, k)]
                if t == 0:
                    raise _Undefined()
                return self.traj.left_limit(name, k, t)
            return self.traj.eval(name, k, t)
        except HydlaError:
            raise _Undefined() from None

    def _interval_symbol(self, s) -> Poly:
        vt = self.traj.vars.get(s[0])
        seg = vt.segment_covering(self._mid()) if vt is not None else None
        if seg is None:
            raise _Undefined()
        return seg.poly.deriv(s[1]).shift(-seg.start)

    def _mid(self) -> Fraction:
        return (self.span.lo + self.span.hi) / 2

    def poly(self, atom: Atom):
        """Poly (open piece), Fraction (point) or None when some value is undefined."""
        if atom not in self.polys:
            point = self.span.point
            mp = atom_to_mpoly(atom, merge_left=not point)
            try:
                known = {s: Poly.const(self._point_symbol(s)) if point else self._interval_symbol(s)
                         for s in mp.symbols()}
                p = mp.subs(known).const_poly()
                self.polys[atom] = p.const_value() if point else p
            except _Undefined:
                self.polys[atom] = None
            self._samples = None
        return self.polys[atom]

    def register(self, constraints):
        for c in constraints:
            for a in _atoms(c):
                self.poly(a)

    def samples(self) -> List[Fraction]:
        if self.span.point:
            return [self.span.lo]
        if self._samples is None:
            lo, hi = self.span.lo, self.span.hi
            roots = set()
            for p in self.polys.values():
                if isinstance(p, Poly) and p.degree >= 1:
                    for r in isolate_roots(p, lo, hi):
                        if r.exact is None:
                            raise UnsupportedError(f"a constraint changes truth at an irrational time "
                                                   f"inside ({lo}, {hi})")
                        if lo < r.exact < hi:
                            roots.add(r.exact)
            cuts = [lo] + sorted(roots) + [hi]
            mids = [(a + b) / 2 for a, b in zip(cuts, cuts[1:])]
            self._samples = sorted(roots) + mids
        return self._samples

    def atom_at(self, atom: Atom, t) -> Optional[bool]:
        p = self.poly(atom)
        if p is None:
            return None
        v = p if self.span.point else p(t)
        return relop_holds(v, atom.op)

    def guard_at(self, guard, t) -> bool:
        return all(self.atom_at(a, t) is True for a in guard)

    def holds_at(self, c, t, vacuous: bool = False) -> Tuple[bool, str]:
        """(truth, reason) of a constraint at sample ``t``."""
        if isinstance(c, Atom):
            v = self.atom_at(c, t)
            if v is None:
                return vacuous, f"{c} refers to an undefined value"
            if v and self.span.point and t > 0 and is_differential(c):
                return self._differentiable(c.lhs.name, c.lhs.order, t), \
                    f"{c} requires {c.lhs.name} to be continuous at t={t}"
            return v, f"{c} is violated at t={t}"
        if isinstance(c, Always):
            for b in c.body:
                ok, why = self.holds_at(b, t, vacuous)
                if not ok:
                    return ok, why
            return True, ""
        if isinstance(c, Implies):
            if not self.guard_at(c.guard, t):
                return True, ""
            for b in c.body:
                ok, why = self.holds_at(b, t, vacuous)
                if not ok:
                    return ok, why
            return True, ""
        return True, ""  # existentials are checked through their Skolemized consequents


    def _differentiable(self, x, n, t) -> bool:
        """A derivative constraint at a point needs every lower order to match its left limit."""
        for k in range(n + 1):
            try:
                left = self._point_symbol((x, k, True))
                now = self._point_symbol((x, k, False))
            except _Undefined:
                continue
            if left != now:
                return False
        return True


def _atoms(c):
    if isinstance(c, Atom):
        yield c
    elif isinstance(c, Implies):
        yield from c.guard
        for b in c.body:
            yield from _atoms(b)
    elif isinstance(c, Always):
        for b in c.body:
            yield from _atoms(b)


def _base(name: str) -> str:
    return name.split("#")[0]


def _later(cs) -> set:
    out = set()
    for c in cs:
        if isinstance(c, Always):
            out |= c.body
    return out


def _names_in(cs) -> set:
    out = set()
    for c in cs:
        for a in _atoms(c):
            for s in atom_to_mpoly(a).symbols():
                out.add(s[0])
        if isinstance(c, Exists):
            out |= _names_in(c.body)
    return out


class Checker:
    def __init__(self, prog: Program, cert: Certificate):
        prog.check()
        self.prog = prog
        self.cert = cert
        self.traj = cert.trajectory
        self.cont = set(prog.cont_modules)
        self.findings: List[Finding] = []
        self.max_order: Dict[str, int] = {}
        for body in prog.ds.values():
            for c in body:
                for a in constraint_atoms(c):
                    for s in atom_to_mpoly(a).symbols():
                        self.max_order[s[0]] = max(self.max_order.get(s[0], 0), s[1])
        self.used_names: set = set()
        self.name_cache: Dict[tuple, str] = {}
        self.ctx = SkolemContext(reserved=set(self.traj.vars))

    def find(self, condition, where, message):
        self.findings.append(Finding(condition, str(where), message))

    # -- Skolemized expansion --------------------------------------------------------------
    def expand(self, members, key, target: Optional[FrozenSet]) -> FrozenSet:
        """Skolemize ``members``; names come from ``target`` when Q is supplied."""
        out = set()
        for c in members:
            if isinstance(c, Exists):
                name = self._skolem_name(c, key, target)
                out |= self.expand(frozenset(rename(b, c.var, name) for b in c.body), key, target)
            elif isinstance(c, Always):
                out.add(Always(self.expand(c.body, key, target)))
            else:
                out.add(c)
        return frozenset(out)

    def _skolem_name(self, c: Exists, key, target) -> str:
        ck = (key, c)
        if ck in self.name_cache:
            return self.name_cache[ck]
        name = None
        if target is not None:
            for cand in sorted(n for n in _names_in(target) if _base(n) == c.var):
                body = self.expand(frozenset(rename(b, c.var, cand) for b in c.body), key, target)
                if body <= target:
                    name = cand
                    break
        if name is None:
            free = sorted((n for n in self.traj.vars if _base(n) == c.var and "#" in n
                           and n not in self.used_names),
                          key=lambda n: int(n.split("#")[1]) if n.split("#")[1].isdigit() else 0)
            name = free[0] if free else self.ctx.fresh(c.var, key[-1], key)
        self.used_names.add(name)
        self.name_cache[ck] = name
        return name

    # -- per-piece sets ----------------------------------------------------------------------
    def forced(self, m, span, base, E, ev: _PieceEval, target=None):
        """Least set for module ``m`` on ``span`` given the inherited ``base``."""
        now, _ = unfold(base)
        if m not in E:
            return now
        fired = set()
        while True:
            todo = sorted((c for c in now if isinstance(c, Implies) and c not in fired), key=str)
            todo = [c for c in todo if self._guard_throughout(c, ev)]
            if not todo:
                return now
            for c in todo:
                fired.add(c)
                now, _ = unfold(now | self.expand(c.body, (m, c, span.lo), target))

    def _guard_throughout(self, c: Implies, ev: _PieceEval) -> bool:
        ev.register([c])
        return all(ev.guard_at(c.guard, t) for t in ev.samples())

    def check_s1(self, E, Q, ev: _PieceEval) -> Optional[str]:
        for m in sorted(E):
            ev.register(Q.get(m, ()))
        for m in sorted(E):
            for c in sorted(Q.get(m, ()), key=str):
                for t in ev.samples():
                    ok, why = ev.holds_at(c, t, vacuous=m in self.cont)
                    if not ok:
                        return f"{why} [{m}]"
        return None

    def check_s3(self, E, Q, span, ev: _PieceEval) -> Optional[str]:
        for m in sorted(E):
            qm = Q.get(m, frozenset())
            for c in sorted((c for c in qm if isinstance(c, Implies)), key=str):
                ev.register([c])
                truth = [ev.guard_at(c.guard, t) for t in ev.samples()]
                if all(truth):
                    body = self.expand(c.body, (m, c, span.lo), qm)
                    missing = body - qm
                    if missing:
                        return (f"guard of {c} holds but Q({m}) lacks "
                                + ", ".join(sorted(map(str, missing))))
                elif any(truth):
                    return f"guard of {c} [{m}] changes truth inside {span}; an event time is missing"
        return None

    def check_s2(self, E, Q, span) -> Optional[Tuple[str, str]]:
        """(condition, message) when some stronger set is satisfiable with the same past."""
        sup = self.prog.ms.superiors(E)
        if not sup:
            return None
        if span.point:
            return self._s2_at(span.lo, sup, Q, self._left_at(span.lo))
        polys = self._left_polys(span)
        crit: List[Poly] = []
        for e2 in sup:
            prob = PointProblem(span.lo, Q, polys, ctx=self.ctx.copy(), cont_modules=self.cont,
                                generic=True)
            prob.evaluate(e2)
            crit.extend(prob.critical)
        roots = set()
        for p in crit:
            for r in isolate_roots(p, span.lo, span.hi):
                if r.exact is None:
                    if r.lo < span.hi and r.hi > span.lo:
                        return "unsupported", f"stronger sets change status at an irrational time in {span}"
                elif span.lo < r.exact < span.hi:
                    roots.add(r.exact)
        cuts = [span.lo] + sorted(roots) + [span.hi]
        samples = sorted(roots) + [(a + b) / 2 for a, b in zip(cuts, cuts[1:])]
        for t in samples:
            left = {k: p(t) for k, p in polys.items()}
            hit = self._s2_at(t, sup, Q, left)
            if hit:
                return hit
        return None

    def _s2_at(self, t, sup, Q, left):
        for e2 in sup:
            prob = PointProblem(t, Q, left, ctx=self.ctx.copy(), cont_modules=self.cont, sat=True)
            outs = prob.evaluate(e2)
            if any(o.status == CONSISTENT for o in outs):
                return "s2", f"stronger set {{{', '.join(sorted(e2))}}} is satisfiable at t={t}"
            bad = [o for o in outs if o.status == UNSUPPORTED]
            if bad:
                return "unsupported", f"cannot decide {{{', '.join(sorted(e2))}}} at t={t}: {bad[0].reason}"
        return None

    def _orders(self, x):
        return range(self.max_order.get(_base(x), 0) + 2)

    def _left_at(self, t) -> Dict[Tuple[str, int], Fraction]:
        if t in self.cert.left:
            return dict(self.cert.left[t])
        out = {}
        if t == 0:
            return out
        for x in self.traj.vars:
            for k in self._orders(x):
                try:
                    out[(x, k)] = self.traj.left_limit(x, k, t)
                except HydlaError:
                    break
        return out

    def _left_polys(self, span) -> Dict[Tuple[str, int], Poly]:
        mid = (span.lo + span.hi) / 2
        out = {}
        for x, vt in self.traj.vars.items():
            seg = vt.segment_covering(mid)
            if seg is not None:
                for k in self._orders(x):
                    out[(x, k)] = seg.poly.deriv(k).shift(-seg.start)
        return out

    # -- whole certificate ------------------------------------------------------------------
    def verify(self) -> VerdictReport:
        cert = self.cert
        events = sorted(set(cert.events))
        if not events or events[0] != 0:
            self.find("events", "t=0", "event times must start at 0")
            return VerdictReport(False, self.findings)
        bounds = set()
        for vt in self.traj.vars.values():
            for seg in vt.segments:
                bounds.add(seg.start)
                if seg.end is not None and seg.end < cert.until:
                    bounds.add(seg.end)
        if bounds - set(events):
            self.find("events", f"t={min(bounds - set(events))}",
                      "trajectory segment boundary missing from the event times")
            return VerdictReport(False, self.findings)
        pieces = _pieces(events, cert.until)
        if cert.q is not None:
            self._check_closure(pieces)
        carry = {m: set() for m in self.prog.ds}
        adopted = []
        for span in pieces:
            try:
                E, Q = self._piece(span, carry)
            except UnsupportedError as exc:
                self.find("unsupported", span, str(exc))
                break
            if E is None:
                break
            adopted.append((span, E))
            for m in self.prog.ds:
                carry[m] |= _later(Q.get(m, ()))
        accepted = not any(f.condition != "note" for f in self.findings)
        return VerdictReport(accepted, self.findings, adopted)

    def _check_closure(self, pieces):
        for m in sorted(self.prog.ds):
            raw = self.cert.q.get(m, {})
            extra = set(raw) - set(pieces)
            if extra:
                self.find("i", min(extra, key=lambda s: s.sort_key()),
                          f"Q({m}) has a piece that does not match the event times")
            tcs = TimedConstraintSet([(s, raw.get(s, ())) for s in pieces])
            closed = box_closure(tcs)
            if closed != tcs:
                for (s, a), (_, b) in zip(tcs.pieces, closed.pieces):
                    if a != b:
                        self.find("i", s, f"Q({m}) is not box-closed: missing "
                                  + ", ".join(sorted(map(str, b - a))))
                        break
            q0 = raw.get(Span.at(0), frozenset())
            need = self.expand(self.prog.ds[m], (m, "DS", Fraction(0)), q0)
            if not need <= q0:
                self.find("ii", "t=0", f"Q({m}) lacks " + ", ".join(sorted(map(str, need - q0))))

    def _piece(self, span, carry):
        cert = self.cert
        ev = _PieceEval(self.traj, span, cert.left.get(span.lo) if span.point else None)
        base = {m: set(carry[m]) for m in self.prog.ds}
        if span.point and span.lo == 0:
            for m, body in self.prog.ds.items():
                target = cert.q.get(m, {}).get(span) if cert.q is not None else None
                base[m] |= self.expand(body, (m, "DS", Fraction(0)), target)
        supplied = None
        if cert.q is not None:
            supplied = {m: frozenset(cert.q.get(m, {}).get(span, frozenset())) for m in self.prog.ds}
        if span in cert.elided:
            self.find("note", span, "interval elided at a Zeno accumulation point; not checked")
            Q = supplied or {m: unfold(base[m])[0] for m in base}
            return frozenset((cert.adopted or {}).get(span, ())), Q
        claimed = (cert.adopted or {}).get(span)
        candidates = [claimed] if claimed is not None else self.prog.ms.top_down()
        first_failure = None
        for E in candidates:
            if E not in self.prog.ms.elements:
                self.find("s1", span, f"adopted set {sorted(E)} is not an element of the poset")
                return None, None
            Q = supplied or {m: self.forced(m, span, base[m], E, ev) for m in self.prog.ds}
            why = self.check_s1(E, Q, ev)
            cond = "s1"
            if why is None:
                cond, why = "s3", self.check_s3(E, Q, span, ev)
            if why is None:
                hit = self.check_s2(E, Q, span)
                if hit:
                    cond, why = hit
            if why is None:
                if supplied is not None:
                    self._check_minimal(span, base, E, ev, supplied)
                return E, Q
            if first_failure is None and (cond != "s1" or claimed is not None):
                first_failure = (cond, why, E)
        if first_failure is None:
            self.find("s1", span, "no module set of the poset is satisfied by the trajectory")
        else:
            cond, why, E = first_failure
            self.find(cond, span, f"with E = {{{', '.join(sorted(E))}}}: {why}")
        return None, None

    def _check_minimal(self, span, base, E, ev, supplied):
        for m in sorted(self.prog.ds):
            least = self.forced(m, span, base[m], E, ev, supplied[m])
            extra = supplied[m] - least
            if extra:
                self.find("iv", span, f"Q({m}) is not minimal; unforced: "
                          + ", ".join(sorted(map(str, extra))))


def verify(prog: Program, cert: Certificate) -> VerdictReport:
    """Check a certificate against ``prog`` (which must carry any continuity defaults used)."""
    return Checker(prog, cert).verify()


def certificate_from_trace(trace, until=None) -> Certificate:
    """Turn a simulator trace into a certificate with its recorded Q and adopted sets."""
    traj = PiecewisePoly()
    events, q, adopted, elided, left = [], {}, {}, [], {}
    prev_elided = False
    end = None
    for ph in trace.phases:
        if ph.kind == "point":
            span = Span.at(ph.start)
            events.append(ph.start)
            for x, d in ph.values.items():
                for k, v in d.items():
                    traj.set_point(x, ph.start, k, v)
            if prev_elided:
                left[ph.start] = {(x, k): v for x, d in ph.left.items() for k, v in d.items()}
            prev_elided = False
        else:
            span = Span.open(ph.start, ph.end)
            end = ph.end
            prev_elided = ph.elided
            if ph.elided:
                elided.append(span)
            for x, p in ph.polys.items():
                traj.add_segment(x, ph.start, ph.end, p)
        adopted[span] = frozenset(ph.adopted)
        for m, cs in ph.q_active.items():
            q.setdefault(m, {})[span] = frozenset(cs)
    if until is None:
        until = end if end is not None else (events[-1] if events else Fraction(0))
    return Certificate(traj, events, Fraction(until), q, adopted, tuple(elided), left)


def verify_simulator_output(prog: Program, trace) -> VerdictReport:
    try:
        cert = certificate_from_trace(trace)
    except (HydlaError, AttributeError, TypeError) as exc:
        raise HydlaError(f"cannot convert trace to a certificate: {exc}") from None
    return verify(prog, cert)
