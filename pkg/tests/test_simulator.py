from fractions import Fraction

import pytest

from hydla.ast import HydlaError
from hydla.poset import load_explicit_poset
from hydla.simulator import (BRANCH_LIMIT, HORIZON, NO_SOLUTION, PHASE_LIMIT, ZENO, SimOptions,
                             detect_zeno, differential_orders, inject_continuity_defaults, simulate)
from hydla.solver import UNDERDETERMINED
from hydla.syntax import parse_program

from conftest import program, run

G = Fraction(49, 5)
FULL_BB = {"INIT", "PARAMS", "FALL", "BOUNCE", "CONT(ht,0)", "CONT(ht,1)"}


def bounce_oracle(n):
    """Closed-form impact times and rebound speeds for h0 = 10, c = 1/2."""
    t = Fraction(10, 7)            # sqrt(2 h0 / g) with g = 49/5
    v = G * t                      # impact speed 14
    times, speeds = [], []
    for _ in range(n):
        v = v / 2
        times.append(t)
        speeds.append(v)
        t += 2 * v / G
    return times, speeds


def points(trace):
    return [p for p in trace.phases if p.kind == "point"]


def test_defaults_follow_differential_constraints():
    order, mods = differential_orders(program("bouncing_ball", defaults=False).ds)
    assert order == {"ht": 2}
    assert mods == {"ht": {"FALL"}}
    prog = program("bouncing_ball")
    assert set(prog.cont_modules) == {"CONT(ht,0)", "CONT(ht,1)"}
    # required modules stay in every element
    assert all({"INIT", "PARAMS", "BOUNCE"} <= e for e in prog.ms.elements)


def test_exclude_unknown_default():
    with pytest.raises(HydlaError):
        inject_continuity_defaults(program("pulse_flip", defaults=False), ("CONT(q,0)",))


def test_bouncing_ball_matches_closed_form():
    _, (tr,) = run("bouncing_ball", until=4)
    assert tr.status == HORIZON
    impacts = [p for p in points(tr) if p.start > 0]
    times, speeds = bounce_oracle(4)
    assert [p.start for p in impacts] == times
    assert [p.values["ht"][1] for p in impacts] == speeds
    assert all(p.values["ht"][0] == 0 for p in impacts)
    for p in impacts:
        assert p.adopted == {"INIT", "PARAMS", "BOUNCE", "CONT(ht,0)"}
    for p in tr.phases:
        if p.kind == "interval":
            assert p.adopted == FULL_BB


def test_bouncing_ball_zeno():
    _, (tr,) = run("bouncing_ball", until=10, max_phases=60)
    assert tr.status == ZENO
    assert tr.accumulation == Fraction(30, 7)
    assert detect_zeno(tr, SimOptions(), 0) == Fraction(30, 7)


def test_zeno_beyond_horizon_is_ignored():
    _, (tr,) = run("bouncing_ball", until=4)
    assert tr.status == HORIZON and tr.accumulation is None


def test_post_zeno_rests_on_the_floor():
    _, (tr,) = run("bouncing_ball_vmax", until=6, post_zeno=True)
    acc = Fraction(30, 7)
    assert tr.accumulation == acc
    assert any(p.elided for p in tr.phases)
    after = [p for p in tr.phases if p.start >= acc]
    assert after
    for p in after:
        if p.kind == "point":
            assert p.values["ht"][0] == 0
        else:
            assert p.polys["ht"].is_zero()


def test_timer_pulse():
    _, (tr,) = run("timer_pulse", until=10)
    assert tr.status == HORIZON
    for p in tr.phases:
        g = p.values["g"][0] if p.kind == "point" else p.polys["g"](0)
        assert g == (1 if p.kind == "point" and p.start == 7 else 0)
    (at7,) = [p for p in points(tr) if p.start == 7]
    assert "B" not in at7.adopted


def test_pulse_contradicts_right_continuity():
    _, (tr,) = run("pulse_flip", until=5)
    assert tr.status == NO_SOLUTION
    assert "after t=1" in tr.diagnostic
    assert "right continuity of b" in tr.diagnostic


def test_pulse_without_right_continuity_is_underdetermined():
    _, (tr,) = run("pulse_flip", until=5, exclude=("CONT(b,0)",))
    assert tr.status == UNDERDETERMINED
    assert "free b" in tr.diagnostic


def test_open_initial_value_is_underdetermined():
    _, (tr,) = run("timer_jump", until=10)
    assert tr.status == UNDERDETERMINED
    assert "t=0" in tr.diagnostic


def test_phase_limit():
    _, (tr,) = run("bouncing_ball", until=4, max_phases=3)
    assert tr.status == PHASE_LIMIT
    assert len(tr.phases) == 3


BRANCHING = """
A <=> x = 0 & [](x' = 1) & [](x != 2 => y = 0).
B <=> [](x = 2 => y = 1).
C <=> [](x = 2 => y = 2).
"""
BRANCHING_POSET = {"elements": [["A", "B", "C"], ["A", "B"], ["A", "C"]], "order": [[1, 0], [2, 0]]}


def branching_program():
    prog = parse_program(BRANCHING)
    prog.ms = load_explicit_poset(BRANCHING_POSET, prog.ds)
    return inject_continuity_defaults(prog)


def test_incomparable_outcomes_fork():
    traces = simulate(branching_program(), SimOptions(until=Fraction(3)))
    assert len(traces) == 2
    ys = sorted(next(p for p in t.phases if p.start == 2 and p.kind == "point").values["y"][0]
                for t in traces)
    assert ys == [1, 2]
    for t in traces:
        assert t.status == HORIZON


def test_branch_limit():
    traces = simulate(branching_program(), SimOptions(until=Fraction(3), branch_limit=1))
    assert len(traces) == 1
    assert traces[0].status == BRANCH_LIMIT


def test_conflicting_required_modules_have_no_solution():
    prog = inject_continuity_defaults(parse_program(BRANCHING + "A, B, C."))
    (tr,) = simulate(prog, SimOptions(until=Fraction(3)))
    assert tr.status == NO_SOLUTION
    assert "t=2" in tr.diagnostic


def test_irrational_event_is_unsupported():
    prog = inject_continuity_defaults(parse_program(
        "A <=> x = 0 & [](x' = 1).\nB <=> [](x * x = 2 => y = 1).\nC <=> [](y = 0).\nA, (C << B)."))
    (tr,) = simulate(prog, SimOptions(until=Fraction(3)))
    assert tr.status == "unsupported"
    assert "irrational" in tr.diagnostic


def test_phase_times_increase():
    _, (tr,) = run("bouncing_ball", until=4)
    starts = [p.start for p in tr.phases]
    assert starts == sorted(starts)
    for a, b in zip(tr.phases, tr.phases[1:]):
        if a.kind == "interval":
            assert a.end == b.start and b.kind == "point"
