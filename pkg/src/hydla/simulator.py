"""Phase-based simulation: alternating point and interval phases.

Each point phase solves the instant at a discrete-change time given the
left limits; each interval phase solves the open interval that follows
and ends at the earliest time some guard or atom changes truth.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, FrozenSet, List, Optional, Tuple

from .ast import (Always, Atom, Exists, HydlaError, Implies, UnsupportedError, Var, atom_vars, bound_names,
                  constraint_atoms, is_differential)
from .constraints import QStore, SkolemContext, Span
from .poset import ModuleSetPoset, derive_from_priorities, transitive_closure
from .solver import (CONSISTENT, INCONSISTENT, UNDERDETERMINED, UNSUPPORTED, IntervalProblem,
                     PointProblem, _mpoly, find_maximal_consistent)
from .syntax import Program, decl_modules
from .trajectory import IrrationalRoot, Poly, earliest_change

HORIZON = "horizon"
ZENO = "zeno"
NO_SOLUTION = "no_solution"
BRANCH_LIMIT = "branch_limit"
PHASE_LIMIT = "phase_limit"


@dataclass
class SimOptions:
    until: Fraction = Fraction(10)
    max_phases: int = 200
    branch_limit: int = 16
    zeno_window: int = 4
    zeno_ratio_tol: Fraction = Fraction(1, 1000)
    post_zeno: bool = False
    exclude_defaults: Tuple[str, ...] = ()

    def __post_init__(self):
        self.until = Fraction(self.until)
        self.zeno_ratio_tol = Fraction(self.zeno_ratio_tol)
        if self.until <= 0 or self.max_phases < 1 or self.branch_limit < 1 or self.zeno_window < 2:
            raise HydlaError("simulation options must be positive (zeno window at least 2)")


@dataclass
class Phase:
    kind: str  # "point" or "interval"
    start: Fraction
    end: Optional[Fraction]
    adopted: FrozenSet[str] = frozenset()
    values: Dict[str, Dict[int, Fraction]] = field(default_factory=dict)
    left: Dict[str, Dict[int, Fraction]] = field(default_factory=dict)
    polys: Dict[str, Poly] = field(default_factory=dict)
    q_additions: Dict[str, FrozenSet] = field(default_factory=dict)
    q_active: Dict[str, FrozenSet] = field(default_factory=dict)
    elided: bool = False

    @property
    def time(self) -> Fraction:
        return self.start


@dataclass
class PhaseTrace:
    phases: List[Phase] = field(default_factory=list)
    status: Optional[str] = None
    accumulation: Optional[Fraction] = None
    diagnostic: str = ""

    def point_phases(self) -> List[Phase]:
        return [p for p in self.phases if p.kind == "point"]


# -- continuity defaults ---------------------------------------------------------------

def cont_name(x: str, k: int) -> str:
    return f"CONT({x},{k})"


def _has_conditional(c) -> bool:
    if isinstance(c, Implies):
        return True
    if isinstance(c, Atom):
        return False
    return any(_has_conditional(b) for b in c.body)


def _flow_atoms(c, boxed=False):
    """Atoms holding throughout time: under a box and outside any conditional."""
    if isinstance(c, Atom):
        if boxed:
            yield c
    elif isinstance(c, Always):
        for b in c.body:
            yield from _flow_atoms(b, True)
    elif isinstance(c, Exists):
        for b in c.body:
            yield from _flow_atoms(b, boxed)


def differential_orders(ds) -> Tuple[Dict[str, int], Dict[str, set]]:
    """Maximal order of the differential constraints on each free variable, and their modules.

    Only boxed derivative equations outside conditionals count: an unboxed
    ``x' = 0`` is an initial value and a guarded one is a discrete change.
    """
    bound = {n for body in ds.values() for c in body for n in bound_names(c)}
    order: Dict[str, int] = {}
    mods: Dict[str, set] = {}
    for m, body in ds.items():
        for c in body:
            for a in _flow_atoms(c):
                if is_differential(a) and a.lhs.name not in bound:
                    x = a.lhs.name
                    order[x] = max(order.get(x, 0), a.lhs.order)
                    mods.setdefault(x, set()).add(m)
    return order, mods


def inject_continuity_defaults(prog: Program, exclude=()) -> Program:
    """Add CONT(x,k) <=> [](x^(k)- = x^(k)) for k below x's differential order.

    With a derived poset each CONT module is placed above the modules
    defining x and below everything those modules are weaker than.  With an
    explicit poset the elements become S | T for T a subset of the CONT
    modules, where T may leave one out only if S contains a guarded module.
    """
    prog.check()
    order, mods = differential_orders(prog.ds)
    conts: Dict[str, Tuple[str, int]] = {}
    for x in sorted(order):
        for k in range(order[x]):
            name = cont_name(x, k)
            if name not in exclude:
                conts[name] = (x, k)
    unknown = set(exclude) - {cont_name(x, k) for x in order for k in range(order[x])}
    if unknown:
        raise HydlaError(f"no such continuity default: {sorted(unknown)}")
    ds = dict(prog.ds)
    for name, (x, k) in conts.items():
        ds[name] = frozenset({Always(frozenset({Atom(Var(x, k, True), "=", Var(x, k))}))})
    if prog.priorities is not None:
        rel = transitive_closure(prog.priorities)
        pairs = set(prog.priorities)
        for name, (x, _) in conts.items():
            for d in mods[x]:
                pairs.add((d, name))
                pairs |= {(name, b) for (a, b) in rel if a == d}
        ms = derive_from_priorities(decl_modules(prog.declaration) + list(conts), pairs)
    else:
        pairs = None
        ms = _product_poset(prog.ms, list(conts), {m for m, b in prog.ds.items()
                                                   if any(_has_conditional(c) for c in b)})
    return Program(ds=ds, ms=ms, declaration=prog.declaration, source=prog.source,
                   priorities=pairs, cont_modules=conts)


def _product_poset(ms: ModuleSetPoset, conts: List[str], guarded: set) -> ModuleSetPoset:
    full = frozenset(conts)
    pairs = []
    for s in ms.elements:
        for r in range(len(conts), -1, -1):
            for t in itertools.combinations(conts, r):
                t = frozenset(t)
                if t == full or s & guarded:
                    pairs.append((s, t))
    order = set()
    for i, (s1, t1) in enumerate(pairs):
        for j, (s2, t2) in enumerate(pairs):
            if (ms.precedes(s1, s2) and t1 <= t2) or (s1 == s2 and t1 < t2):
                order.add((i, j))
    return ModuleSetPoset(tuple(s | t for s, t in pairs), frozenset(order))


# -- program facts used during simulation ------------------------------------------------

class _Facts:
    def __init__(self, prog: Program):
        self.prog = prog
        self.max_order: Dict[str, int] = {}
        for body in prog.ds.values():
            for c in body:
                for a in constraint_atoms(c):
                    for v in atom_vars(a):
                        self.max_order[v.name] = max(self.max_order.get(v.name, 0), v.order)
        self.right_cont: Dict[str, set] = {}
        for x, k in prog.cont_modules.values():
            self.right_cont.setdefault(x, set()).add(k)


def _flatten(vals: Dict[str, Dict[int, Fraction]]) -> Dict[Tuple[str, int], Fraction]:
    return {(x, k): v for x, d in vals.items() for k, v in d.items()}


def _nest(model) -> Dict[str, Dict[int, Fraction]]:
    out: Dict[str, Dict[int, Fraction]] = {}
    for (x, k, left), v in model.items():
        if not left:
            out.setdefault(x, {})[k] = v.const_value() if isinstance(v, Poly) else Fraction(v)
    return out


# -- Zeno handling ---------------------------------------------------------------------------

def _is_change_point(trace: PhaseTrace, i: int) -> bool:
    """A point phase after t=0 where the adopted set or some value jumps."""
    ph = trace.phases[i]
    if ph.kind != "point" or ph.start == 0 or ph.elided:
        return False
    prev = trace.phases[i - 1] if i > 0 else None
    if prev is not None and prev.adopted != ph.adopted:
        return True
    left = _flatten(ph.left)
    return any(left.get(key, v) != v for key, v in _flatten(ph.values).items())


def _common_ratio(seq: List[Fraction], tol: Fraction) -> Optional[Fraction]:
    ratios = [b / a for a, b in zip(seq, seq[1:])]
    r = ratios[-1]
    if all(abs(q - r) <= tol for q in ratios):
        return r
    return None


def detect_zeno(trace: PhaseTrace, opts: SimOptions, since: Fraction = Fraction(0)) -> Optional[Fraction]:
    """Accumulation time when the last ``zeno_window`` change-point gaps shrink geometrically."""
    times = [p.start for i, p in enumerate(trace.phases)
             if p.start > since and _is_change_point(trace, i)]
    if len(times) < opts.zeno_window + 1:
        return None
    gaps = [b - a for a, b in zip(times, times[1:])][-opts.zeno_window:]
    if any(g <= 0 for g in gaps):
        return None
    r = _common_ratio(gaps, opts.zeno_ratio_tol)
    if r is None or not 0 < r < 1:
        return None
    return times[-1] + gaps[-1] * r / (1 - r)


def extrapolate_limit(trace: PhaseTrace, opts: SimOptions, since: Fraction = Fraction(0)):
    """Geometric limits of the left-limit valuations seen at the last change points."""
    idx = [i for i, p in enumerate(trace.phases) if p.start > since and _is_change_point(trace, i)]
    lefts = [_flatten(trace.phases[i].left) for i in idx[-opts.zeno_window:]]
    keys = set(lefts[0]).intersection(*lefts[1:])
    out = {}
    for key in sorted(keys):
        seq = [d[key] for d in lefts]
        diffs = [b - a for a, b in zip(seq, seq[1:])]
        if all(d == 0 for d in diffs):
            out[key] = seq[-1]
            continue
        if any(d == 0 for d in diffs):
            raise UnsupportedError(f"cannot extrapolate {key[0]}{chr(39) * key[1]} at the accumulation point")
        r = _common_ratio(diffs, opts.zeno_ratio_tol)
        if r is None or not -1 < r < 1:
            raise UnsupportedError(f"cannot extrapolate {key[0]}{chr(39) * key[1]}: values do not converge")
        out[key] = seq[-1] + diffs[-1] * r / (1 - r)
    return out


# -- the phase loop ----------------------------------------------------------------------------

@dataclass
class _Branch:
    trace: PhaseTrace
    q: QStore
    zeno_since: Fraction = Fraction(0)
    next_left: Optional[Dict[Tuple[str, int], Fraction]] = None
    next_time: Fraction = Fraction(0)


def _nested(flat) -> Dict[str, Dict[int, Fraction]]:
    out: Dict[str, Dict[int, Fraction]] = {}
    for (x, k), v in flat.items():
        out.setdefault(x, {})[k] = v
    return out


def _active(q: QStore, prog: Program, span: Span) -> Dict[str, FrozenSet]:
    probe = span.lo if span.point else (span.lo + span.hi) / 2 if span.hi is not None else span.lo + 1
    return {m: q.timed(m, [Span.at(span.lo)]).at(probe) for m in prog.ds}


def _summarize(failures, t) -> str:
    reasons = []
    for e, outs in failures.items():
        for o in outs:
            if o.reason and o.reason not in reasons:
                reasons.append(o.reason)
    return f"no solution at t={t}: " + "; ".join(reasons[:6])


def _dedupe(outcomes):
    seen, out = set(), []
    for o in outcomes:
        key = (o.modules, tuple(sorted((k, v.c) for k, v in o.model.items())))
        if key not in seen:
            seen.add(key)
            out.append(o)
    return out


def _base_name(x: str) -> str:
    return x.split("#")[0]


class Simulator:
    """Breadth-first phase expansion over all branches."""

    def __init__(self, prog: Program, opts: SimOptions):
        prog.check()
        self.prog = prog
        self.opts = opts
        self.facts = _Facts(prog)
        self.cont = set(prog.cont_modules)

    def run(self) -> List[PhaseTrace]:
        live = [_Branch(PhaseTrace(), QStore(self.prog.ds, SkolemContext()), next_left={})]
        done: List[PhaseTrace] = []
        while live:
            nxt: List[_Branch] = []
            for i, br in enumerate(live):
                children = self._step(br)
                room = self.opts.branch_limit - len(done) - len(nxt) - (len(live) - i - 1)
                if len(children) > max(room, 1):
                    br.trace.status = BRANCH_LIMIT
                    br.trace.diagnostic = f"{len(children)} maximal outcomes at t={br.next_time}"
                    children = [br]
                for c in children:
                    if c.trace.status:
                        done.append(c.trace)
                    else:
                        nxt.append(c)
            live = nxt
        return done

    def _clone(self, br: _Branch) -> _Branch:
        tr = PhaseTrace(list(br.trace.phases), None, br.trace.accumulation, "")
        return _Branch(tr, br.q.copy(), br.zeno_since, dict(br.next_left or {}), br.next_time)

    def _order_of(self, x: str) -> int:
        return self.facts.max_order.get(_base_name(x), 0)

    def _step(self, br: _Branch) -> List[_Branch]:
        tr = br.trace
        if len(tr.phases) >= self.opts.max_phases:
            tr.status = PHASE_LIMIT
            tr.diagnostic = f"stopped after {len(tr.phases)} phases"
            return [br]
        try:
            if not tr.phases or tr.phases[-1].kind == "interval":
                return self._point(br)
            return self._interval(br)
        except UnsupportedError as exc:
            tr.status = UNSUPPORTED
            tr.diagnostic = str(exc)
            return [br]

    def _fail(self, br: _Branch, status: str, diagnostic: str) -> List[_Branch]:
        br.trace.status = status
        br.trace.diagnostic = diagnostic
        return [br]

    # point phases -----------------------------------------------------------------
    def _point(self, br: _Branch) -> List[_Branch]:
        t, left = br.next_time, br.next_left or {}
        span = Span.at(t)
        problem = PointProblem(t, _active(br.q, self.prog, span), left, ctx=br.q.ctx,
                               cont_modules=self.cont)
        res = find_maximal_consistent(self.prog.ms, problem)
        if res.blocking:
            return self._fail(br, res.status, res.blocking[0].reason)
        if not res.outcomes:
            return self._fail(br, NO_SOLUTION, _summarize(res.failures, t))
        outcomes = _dedupe(res.outcomes)
        children = []
        for o in outcomes:
            child = self._clone(br) if len(outcomes) > 1 else br
            for m, add in o.additions.items():
                child.q.add(m, span, add)
            child.trace.phases.append(Phase(
                "point", t, t, o.modules, _nest(o.model), _nested(left), {},
                dict(o.additions), _active(child.q, self.prog, span)))
            self._zeno(child, t)
            children.append(child)
        return children

    def _zeno(self, br: _Branch, t: Fraction):
        acc = detect_zeno(br.trace, self.opts, br.zeno_since)
        if acc is None or acc >= self.opts.until:
            return
        br.trace.accumulation = acc
        if not self.opts.post_zeno:
            br.trace.status = ZENO
            br.trace.diagnostic = f"Zeno behaviour: discrete changes accumulate at t={acc}"
            return
        limit = extrapolate_limit(br.trace, self.opts, br.zeno_since)
        gap = Span.open(t, acc)
        br.trace.phases.append(Phase("interval", t, acc, q_active=_active(br.q, self.prog, gap), elided=True))
        br.next_time, br.next_left, br.zeno_since = acc, limit, acc

    # interval phases -----------------------------------------------------------------
    def _interval_problem(self, br: _Branch, t0, right_cont) -> IntervalProblem:
        init = _flatten(br.trace.phases[-1].values)
        max_order = {x: self._order_of(x) for x in {k[0] for k in init} | set(self.facts.max_order)}
        return IntervalProblem(t0, _active(br.q, self.prog, Span.open(t0)), init, ctx=br.q.ctx,
                               cont_modules=self.cont, right_cont=right_cont, max_order=max_order)

    def _interval(self, br: _Branch) -> List[_Branch]:
        t0 = br.trace.phases[-1].start
        res = find_maximal_consistent(self.prog.ms, self._interval_problem(br, t0, self.facts.right_cont))
        if res.blocking:
            return self._fail(br, res.status, res.blocking[0].reason)
        if not res.outcomes:
            return self._fail(br, NO_SOLUTION, self._interval_diagnostic(br, t0, res))
        outcomes = _dedupe(res.outcomes)
        children = []
        horizon = self.opts.until - t0
        for o in outcomes:
            child = self._clone(br) if len(outcomes) > 1 else br
            ev = self._event(o, horizon)
            if isinstance(ev, IrrationalRoot):
                raise UnsupportedError(f"event time after t={t0} is irrational "
                                       f"(between {t0 + ev.lo} and {t0 + ev.hi})")
            end = t0 + ev if ev is not None and ev < horizon else self.opts.until
            polys = {s[0]: p for s, p in o.model.items() if s[1] == 0}
            for m, add in o.additions.items():
                child.q.add(m, Span.open(t0, end), add)
            child.trace.phases.append(Phase(
                "interval", t0, end, o.modules, {}, {}, polys, dict(o.additions),
                _active(child.q, self.prog, Span.open(t0, end))))
            if end >= self.opts.until:
                child.trace.status = HORIZON
            else:
                child.next_time = end
                child.next_left = {(x, k): p.deriv(k)(end - t0)
                                   for x, p in polys.items() for k in range(self._order_of(x) + 2)}
            children.append(child)
        return children

    def _event(self, o, horizon):
        """Earliest truth change (relative time) of any guard or atom with known symbols."""
        best = None
        for m in sorted(o.sets):
            for c in o.sets[m]:
                if isinstance(c, Implies):
                    atoms = sorted(c.guard, key=str)
                elif isinstance(c, Atom):
                    atoms = [c]
                else:
                    continue
                polys = []
                for a in atoms:
                    mp = _mpoly(a, True).subs(o.model)
                    if mp.symbols():
                        break
                    polys.append((mp.const_poly(), a.op))
                else:
                    ev = earliest_change(polys, 0, horizon)
                    if ev is not None and (best is None or _time_key(ev) < _time_key(best)):
                        best = ev
        return best

    def _interval_diagnostic(self, br: _Branch, t0, res) -> str:
        culprits = []
        for x in sorted(self.facts.right_cont):
            rc = {y: ks for y, ks in self.facts.right_cont.items() if y != x}
            retry = find_maximal_consistent(self.prog.ms, self._interval_problem(br, t0, rc))
            if retry.outcomes or retry.blocking:
                culprits.append(x)
        if culprits:
            return (f"no solution after t={t0}: every candidate contradicts the right continuity of "
                    + ", ".join(culprits))
        return _summarize(res.failures, f"{t0}+")


def _time_key(ev):
    return ev if isinstance(ev, Fraction) else ev.lo


def simulate(prog: Program, opts: SimOptions = None) -> List[PhaseTrace]:
    """Run every branch of ``prog`` (continuity defaults are not added here)."""
    return Simulator(prog, opts or SimOptions()).run()


def post_zeno_continue(trace: PhaseTrace, accumulation, opts: SimOptions):
    """Limit valuation used as left limits at the accumulation time."""
    return {(x, k): v for (x, k), v in extrapolate_limit(trace, opts).items()}
