"""JSON trace documents, certificates and the CSV sampling view."""
from __future__ import annotations

import csv
import hashlib
import io
import json
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional

from .ast import HydlaError, format_constraint
from .checker import Certificate, certificate_from_trace
from .constraints import Span
from .poset import load_explicit_poset
from .simulator import Phase, PhaseTrace, SimOptions
from .syntax import Program, parse_constraint, parse_program
from .trajectory import PiecewisePoly, Poly

FORMAT = "hydla-trace"
VERSION = 1


class TraceFormatError(HydlaError):
    """A trace or certificate document does not have the expected shape."""


# -- rationals ---------------------------------------------------------------------------

def rat_to_json(q) -> dict:
    q = Fraction(q)
    return {"n": str(q.numerator), "d": str(q.denominator)}


def rat_from_json(obj) -> Fraction:
    try:
        n, d = int(obj["n"]), int(obj["d"])
    except (KeyError, TypeError, ValueError):
        raise TraceFormatError(f"not a rational: {obj!r}") from None
    if d <= 0:
        raise TraceFormatError(f"rational with non-positive denominator: {obj!r}")
    return Fraction(n, d)


# -- phases ------------------------------------------------------------------------------

def _constraints_to_json(sets) -> Dict[str, List[str]]:
    return {m: sorted(format_constraint(c) for c in cs) for m, cs in sets.items()}


def _constraints_from_json(obj) -> Dict[str, frozenset]:
    out = {}
    for m, items in obj.items():
        cs = set()
        for text in items:
            cs |= parse_constraint(text)
        out[m] = frozenset(cs)
    return out


def _values_to_json(vals) -> dict:
    return {x: {str(k): rat_to_json(v) for k, v in d.items()} for x, d in vals.items()}


def _values_from_json(obj) -> dict:
    return {x: {int(k): rat_from_json(v) for k, v in d.items()} for x, d in obj.items()}


def phase_to_json(ph: Phase) -> dict:
    out = {
        "kind": ph.kind,
        "adopted": sorted(ph.adopted),
        "q_additions": _constraints_to_json(ph.q_additions),
        "q_active": _constraints_to_json(ph.q_active),
    }
    if ph.kind == "point":
        out["time"] = rat_to_json(ph.start)
        out["values"] = _values_to_json(ph.values)
        out["left"] = _values_to_json(ph.left)
    else:
        out["start"] = rat_to_json(ph.start)
        out["end"] = rat_to_json(ph.end)
        out["polys"] = {x: [rat_to_json(c) for c in p.c] for x, p in ph.polys.items()}
        out["elided"] = ph.elided
    return out


def phase_from_json(obj) -> Phase:
    try:
        kind = obj["kind"]
        adopted = frozenset(obj.get("adopted", ()))
        adds = _constraints_from_json(obj.get("q_additions", {}))
        active = _constraints_from_json(obj.get("q_active", {}))
        if kind == "point":
            t = rat_from_json(obj["time"])
            return Phase("point", t, t, adopted, _values_from_json(obj.get("values", {})),
                         _values_from_json(obj.get("left", {})), {}, adds, active)
        if kind == "interval":
            polys = {x: Poly([rat_from_json(c) for c in cs]) for x, cs in obj.get("polys", {}).items()}
            return Phase("interval", rat_from_json(obj["start"]), rat_from_json(obj["end"]), adopted,
                         {}, {}, polys, adds, active, bool(obj.get("elided", False)))
    except (KeyError, TypeError, AttributeError) as exc:
        raise TraceFormatError(f"malformed phase: missing or bad field {exc}") from None
    raise TraceFormatError(f"unknown phase kind {obj.get('kind')!r}")


def trace_to_json(tr: PhaseTrace) -> dict:
    return {
        "status": tr.status,
        "accumulation": None if tr.accumulation is None else rat_to_json(tr.accumulation),
        "diagnostic": tr.diagnostic,
        "phases": [phase_to_json(p) for p in tr.phases],
    }


def trace_from_json(obj) -> PhaseTrace:
    try:
        acc = obj.get("accumulation")
        return PhaseTrace([phase_from_json(p) for p in obj["phases"]], obj.get("status"),
                          None if acc is None else rat_from_json(acc), obj.get("diagnostic", ""))
    except (KeyError, TypeError, AttributeError) as exc:
        raise TraceFormatError(f"malformed branch: {exc}") from None


# -- documents ---------------------------------------------------------------------------

def program_hash(source: str) -> str:
    return hashlib.sha256(source.encode("utf-8")).hexdigest()


def options_to_json(opts: SimOptions) -> dict:
    return {
        "until": rat_to_json(opts.until),
        "max_phases": opts.max_phases,
        "branch_limit": opts.branch_limit,
        "zeno_window": opts.zeno_window,
        "zeno_ratio_tol": rat_to_json(opts.zeno_ratio_tol),
        "post_zeno": opts.post_zeno,
        "exclude_defaults": sorted(opts.exclude_defaults),
    }


def make_document(prog: Program, traces: List[PhaseTrace], opts: SimOptions,
                  continuity: bool = True) -> dict:
    return {
        "format": FORMAT,
        "version": VERSION,
        "program_sha256": program_hash(prog.source),
        "options": options_to_json(opts),
        "continuity_defaults": continuity,
        "branches": [trace_to_json(t) for t in traces],
    }


def dumps(doc: dict) -> str:
    """Canonical text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def loads(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TraceFormatError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("branches"), list):
        raise TraceFormatError("document has no 'branches' list")
    return doc


def document_traces(doc: dict) -> List[PhaseTrace]:
    return [trace_from_json(b) for b in doc["branches"]]


def roundtrip(text: str) -> str:
    """Parse a document into traces and emit it again."""
    doc = loads(text)
    out = dict(doc)
    out["branches"] = [trace_to_json(t) for t in document_traces(doc)]
    return dumps(out)


def certificate_from_document(doc: dict, branch: int = 0) -> Certificate:
    """Build a certificate; Q and adopted sets are used only when every phase has them."""
    try:
        raw = doc["branches"][branch]
    except (IndexError, KeyError):
        raise TraceFormatError(f"certificate has no branch {branch}") from None
    tr = trace_from_json(raw)
    if not tr.phases:
        return Certificate(PiecewisePoly(), [Fraction(0)], Fraction(0))
    cert = certificate_from_trace(tr, rat_from_json(raw["until"]) if "until" in raw else None)
    if not all("q_active" in p for p in raw["phases"]):
        cert.q = None
    if not all("adopted" in p for p in raw["phases"]):
        cert.adopted = None
    return cert


# -- program loading ------------------------------------------------------------------------

def load_program(path, explicit_poset: Optional[str] = None) -> Program:
    """Parse a program file; ``<stem>.poset.json`` next to it is used when present."""
    path = Path(path)
    prog = parse_program(path.read_text(encoding="utf-8"))
    sidecar = Path(explicit_poset) if explicit_poset else path.with_suffix(".poset.json")
    if explicit_poset or sidecar.exists():
        prog.ms = load_explicit_poset(sidecar.read_text(encoding="utf-8"), prog.ds)
        prog.priorities = None
    prog.check()
    return prog


# -- CSV view -----------------------------------------------------------------------------------

def _render(v: Optional[Fraction], precision: int) -> str:
    if v is None:
        return ""
    s = f"{float(v):.{precision}f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _sample(tr: PhaseTrace, x: str, t: Fraction) -> Optional[Fraction]:
    for ph in tr.phases:
        if ph.kind == "point" and ph.start == t:
            return ph.values.get(x, {}).get(0)
        if ph.kind == "interval" and ph.start < t < ph.end and x in ph.polys:
            return ph.polys[x](t - ph.start)
    last = tr.phases[-1]
    if last.kind == "interval" and last.end == t and x in last.polys:
        return last.polys[x](t - last.start)
    return None


def emit_csv(traces: List[PhaseTrace], step, precision: int = 6) -> str:
    """Lossy decimal view: rows at multiples of ``step`` and at every phase boundary."""
    step = Fraction(step)
    if step <= 0:
        raise HydlaError("CSV step must be positive")
    names = sorted({x for tr in traces for ph in tr.phases
                    for x in (ph.values if ph.kind == "point" else ph.polys)})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    multi = len(traces) > 1
    w.writerow((["branch"] if multi else []) + ["t"] + names)
    for i, tr in enumerate(traces):
        if not tr.phases:
            continue
        end = max(p.end if p.end is not None else p.start for p in tr.phases)
        times = {p.start for p in tr.phases} | {p.end for p in tr.phases if p.end is not None}
        k = 0
        while k * step <= end:
            times.add(k * step)
            k += 1
        for t in sorted(times):
            row = [_render(_sample(tr, x, t), precision) for x in names]
            w.writerow(([str(i)] if multi else []) + [_render(t, precision)] + row)
    return buf.getvalue()
