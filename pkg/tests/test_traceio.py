import csv
import io
import json
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from hydla.ast import HydlaError
from hydla.simulator import Phase, PhaseTrace, SimOptions
from hydla.syntax import parse_constraint
from hydla.traceio import (TraceFormatError, certificate_from_document, document_traces, dumps,
                           emit_csv, load_program, loads, make_document, rat_from_json, rat_to_json,
                           roundtrip, trace_to_json)
from hydla.trajectory import Poly

from conftest import PROGRAMS, run


def test_rational_encoding():
    assert rat_to_json(Fraction(-49, 5)) == {"n": "-49", "d": "5"}
    assert rat_from_json({"n": "10", "d": "7"}) == Fraction(10, 7)
    with pytest.raises(TraceFormatError):
        rat_from_json({"n": "1", "d": "0"})
    with pytest.raises(TraceFormatError):
        rat_from_json({"n": "x", "d": "1"})


@pytest.mark.parametrize("name, until, kw", [("bouncing_ball", 10, {}), ("timer_pulse", 10, {}),
                                             ("bouncing_ball_vmax", 6, {"post_zeno": True})])
def test_simulator_documents_round_trip(name, until, kw):
    prog, traces = run(name, until=until, **kw)
    text = dumps(make_document(prog, traces, SimOptions(until=Fraction(until), **kw)))
    assert roundtrip(text) == text
    assert text.endswith("\n")


def test_document_carries_program_hash():
    prog, traces = run("timer_pulse")
    doc = make_document(prog, traces, SimOptions())
    assert len(doc["program_sha256"]) == 64
    assert doc["continuity_defaults"] is True


# -- random traces -------------------------------------------------------------------------

rats = st.fractions(min_value=-1000, max_value=1000, max_denominator=1000)
values = st.dictionaries(st.sampled_from(["x", "y", "ht"]),
                         st.dictionaries(st.integers(0, 2), rats, max_size=3), max_size=3)
csets = st.dictionaries(st.sampled_from(["A", "B"]),
                        st.sets(st.sampled_from([parse_constraint(t) for t in
                                                 ["x = 1", "y' = -2 & [](x = 1)", "x- = 0 => y = 3"]]),
                                max_size=2).map(lambda ss: frozenset().union(*ss) if ss else frozenset()),
                        max_size=2)


@st.composite
def traces(draw):
    t = Fraction(0)
    phases = []
    for i in range(draw(st.integers(1, 5))):
        adopted = frozenset(draw(st.sets(st.sampled_from("AB"))))
        if i % 2 == 0:
            phases.append(Phase("point", t, t, adopted, draw(values), draw(values), {},
                                draw(csets), draw(csets)))
        else:
            end = t + draw(st.fractions(min_value=Fraction(1, 100), max_value=5, max_denominator=100))
            polys = draw(st.dictionaries(st.sampled_from(["x", "y"]),
                                         st.lists(rats, max_size=4).map(Poly), max_size=2))
            phases.append(Phase("interval", t, end, adopted, {}, {}, polys, draw(csets), draw(csets),
                                draw(st.booleans())))
            t = end
    acc = draw(st.none() | rats)
    return PhaseTrace(phases, draw(st.sampled_from(["horizon", "zeno", "no_solution"])), acc,
                      draw(st.text(max_size=20)))


@settings(max_examples=200, deadline=None)
@given(st.lists(traces(), min_size=1, max_size=3))
def test_round_trip_is_byte_identical(trs):
    doc = {"format": "hydla-trace", "version": 1, "branches": [trace_to_json(t) for t in trs]}
    text = dumps(doc)
    assert roundtrip(text) == text
    again = document_traces(loads(text))
    assert [len(t.phases) for t in again] == [len(t.phases) for t in trs]


@pytest.mark.parametrize("text", ["not json", "[]", '{"branches": 3}',
                                  '{"branches": [{"phases": [{"kind": "warp"}]}]}',
                                  '{"branches": [{"phases": [{"kind": "point"}]}]}'])
def test_malformed_documents(text):
    with pytest.raises(TraceFormatError):
        document_traces(loads(text))


def test_missing_branch():
    with pytest.raises(TraceFormatError):
        certificate_from_document(loads('{"branches": []}'), 0)


def test_sidecar_poset_is_detected():
    prog = load_program(PROGRAMS / "timer_pulse.hydla")
    assert set(prog.ms.elements) == {frozenset("AC"), frozenset("ABC")}


def test_csv_view():
    _, traces = run("timer_pulse", until=10)
    rows = list(csv.reader(io.StringIO(emit_csv(traces, Fraction(1), 3))))
    assert rows[0][0] == "t"
    g = rows[0].index("g")
    pulses = [r[0] for r in rows[1:] if r[g] == "1"]
    assert pulses == ["7"]
    assert [r[0] for r in rows[1:]][:3] == ["0", "1", "2"]


def test_csv_branch_column():
    tr = PhaseTrace([Phase("point", Fraction(0), Fraction(0), frozenset(), {"x": {0: Fraction(1)}},
                           {}, {}, {}, {})], "horizon")
    text = emit_csv([tr, tr], Fraction(1))
    assert text.splitlines()[0] == "branch,t,x"
    assert text.splitlines()[1:] == ["0,0,1", "1,0,1"]


def test_csv_rejects_bad_step():
    with pytest.raises(HydlaError):
        emit_csv([], Fraction(0))


def test_canonical_key_order():
    text = dumps({"b": 1, "a": {"d": 2, "c": 3}})
    assert list(json.loads(text)) == ["a", "b"]
    assert text == '{\n  "a": {\n    "c": 3,\n    "d": 2\n  },\n  "b": 1\n}\n'
