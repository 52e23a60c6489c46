import copy
import json
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from hydla.checker import certificate_from_trace, verify, verify_simulator_output
from hydla.simulator import SimOptions
from hydla.traceio import (certificate_from_document, dumps, load_program, loads, make_document,
                           rat_from_json, rat_to_json)

from conftest import PROGRAMS, program, run


def jump_verdict(name):
    prog = load_program(PROGRAMS / "timer_jump.hydla")
    doc = loads((PROGRAMS / f"timer_jump_{name}.cert.json").read_text())
    return verify(prog, certificate_from_document(doc))


@pytest.mark.parametrize("case", ["case1", "case2", "case3"])
def test_timer_certificates_accepted(case):
    report = jump_verdict(case)
    assert report.accepted, report.summary()


def test_corrupted_timer_certificate_rejected_at_five():
    report = jump_verdict("corrupted")
    assert not report.accepted
    s2 = report.problems("s2")
    assert s2
    assert any(f.where == "{5}" for f in s2)


def test_reconstructed_sets_for_case3():
    report = jump_verdict("case3")
    adopted = {str(span): sorted(e) for span, e in report.adopted}
    assert adopted["{5}"] == ["D", "F"]
    assert adopted["(0, 5)"] == ["D", "E", "F"]


GOLDEN = [("bouncing_ball", 4, {}), ("bouncing_ball", 10, {}),
          ("bouncing_ball_vmax", 6, {"post_zeno": True}), ("timer_pulse", 10, {}), ("pulse_flip", 5, {})]


@pytest.mark.parametrize("name, until, kw", GOLDEN)
def test_simulator_output_verifies(name, until, kw):
    prog, traces = run(name, until=until, **kw)
    for tr in traces:
        report = verify_simulator_output(prog, tr)
        assert report.accepted, report.summary()


def test_q_store_optional():
    prog, (tr,) = run("timer_pulse", until=10)
    cert = certificate_from_trace(tr)
    cert.q = None
    cert.adopted = None
    report = verify(prog, cert)
    assert report.accepted, report.summary()
    assert report.adopted


def bb_document():
    prog, traces = run("bouncing_ball", until=4)
    return prog, json.loads(dumps(make_document(prog, traces, SimOptions(until=Fraction(4)))))


def check_doc(prog, doc):
    return verify(prog, certificate_from_document(loads(dumps(doc))))


def test_unperturbed_document_accepted():
    prog, doc = bb_document()
    assert check_doc(prog, doc).accepted


deltas = st.fractions(min_value=-3, max_value=3, max_denominator=50).filter(lambda d: d != 0)


@settings(max_examples=25, deadline=None)
@given(st.data(), deltas)
def test_value_perturbation_rejected(data, delta):
    prog, doc = bb_document()
    phases = doc["branches"][0]["phases"]
    idx = data.draw(st.sampled_from([i for i, p in enumerate(phases) if p["kind"] == "point"]))
    order = data.draw(st.sampled_from(["0", "1"]))
    entry = phases[idx]["values"]["ht"]
    entry[order] = rat_to_json(rat_from_json(entry[order]) + delta)
    assert not check_doc(prog, doc).accepted


@settings(max_examples=20, deadline=None)
@given(st.data(), st.fractions(min_value=Fraction(-1, 10), max_value=Fraction(1, 10),
                                max_denominator=1000).filter(lambda d: d != 0))
def test_event_time_perturbation_rejected(data, delta):
    prog, doc = bb_document()
    phases = doc["branches"][0]["phases"]
    idx = data.draw(st.sampled_from([i for i, p in enumerate(phases)
                                     if p["kind"] == "point" and rat_from_json(p["time"]) > 0]))
    t = rat_from_json(phases[idx]["time"]) + delta
    phases[idx]["time"] = rat_to_json(t)
    phases[idx - 1]["end"] = rat_to_json(t)
    if idx + 1 < len(phases):
        phases[idx + 1]["start"] = rat_to_json(t)
    assert not check_doc(prog, doc).accepted


@settings(max_examples=20, deadline=None)
@given(st.data())
def test_adopted_set_perturbation_rejected(data):
    prog, doc = bb_document()
    phases = doc["branches"][0]["phases"]
    idx = data.draw(st.integers(0, len(phases) - 1))
    others = [sorted(e) for e in prog.ms.elements if sorted(e) != phases[idx]["adopted"]]
    phases[idx]["adopted"] = data.draw(st.sampled_from(others))
    assert not check_doc(prog, doc).accepted


def test_missing_consequent_in_q_rejected():
    prog, doc = bb_document()
    phases = doc["branches"][0]["phases"]
    impact = next(p for p in phases if p["kind"] == "point" and rat_from_json(p["time"]) > 0)
    impact["q_active"]["BOUNCE"] = [c for c in impact["q_active"]["BOUNCE"] if "=>" in c]
    report = check_doc(prog, doc)
    assert not report.accepted


def test_trace_that_falls_through_the_floor_rejected():
    prog, doc = bb_document()
    branch = doc["branches"][0]
    # keep only the first flight and extend it past the impact
    first = copy.deepcopy(branch["phases"][:2])
    first[1]["end"] = rat_to_json(3)
    for p in first:
        p.pop("adopted")
        p.pop("q_active")
    branch["phases"] = first
    report = check_doc(prog, doc)
    assert not report.accepted


def test_bare_program_accepts_the_same_trajectory():
    _, (tr,) = run("bouncing_ball", until=4)
    bare = program("bouncing_ball", defaults=False)
    cert = certificate_from_trace(tr)
    cert.q = cert.adopted = None
    report = verify(bare, cert)
    assert report.accepted, report.summary()
    impacts = [e for span, e in report.adopted if span.point and span.lo > 0]
    assert impacts and all(e == {"INIT", "PARAMS", "BOUNCE"} for e in impacts)
