from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from hydla.ast import (Always, Atom, BinOp, Exists, Implies, Neg, Num, Var, format_constraint,
                       format_set)
from hydla.syntax import ParseError, format_program, parse_constraint, parse_program

from conftest import PROGRAMS


def test_decimal_literals_are_exact():
    (atom,) = parse_constraint("x = 4.9")
    assert atom.rhs == Num(Fraction(49, 10))
    assert atom.rhs.value * 10 == 49


def test_bouncing_ball_definitions_and_poset():
    prog = parse_program((PROGRAMS / "bouncing_ball.hydla").read_text())
    assert set(prog.ds) == {"INIT", "PARAMS", "FALL", "BOUNCE"}
    elems = set(prog.ms.elements)
    full = frozenset({"INIT", "PARAMS", "FALL", "BOUNCE"})
    assert elems == {full, full - {"FALL"}}
    assert prog.ms.precedes(full - {"FALL"}, full)
    assert not prog.ms.precedes(full, full - {"FALL"})


def test_parallel_modules_are_all_required():
    # without a priority nothing may be dropped; a powerset needs an explicit poset
    prog = parse_program("D <=> y = 0.\nE <=> [](y' = 1).\nF <=> [](x = 1).\nD, E, F.")
    assert prog.ms.elements == (frozenset("DEF"),)


def test_explicit_powerset_poset(programs_dir):
    from hydla.traceio import load_program
    prog = load_program(programs_dir / "timer_jump.hydla")
    assert len(prog.ms.elements) == 8
    assert prog.ms.precedes({"D"}, {"D", "E"})
    assert not prog.ms.precedes({"D"}, {"E", "F"})


def test_single_module():
    prog = parse_program("M <=> x = 1.\nM.")
    assert prog.ms.elements == (frozenset({"M"}),)
    assert not prog.ms.order


def test_priority_chain_is_transitive():
    prog = parse_program("A <=> x = 1.\nB <=> x = 2.\nC <=> x = 3.\nA << B << C.")
    # A is weaker than C through B, so {B, C} and {C} are admissible but {A, B} is not
    elems = set(prog.ms.elements)
    assert frozenset({"C"}) in elems
    assert frozenset({"A", "B"}) not in elems
    assert frozenset({"A", "B", "C"}) in elems


def test_timer_module_structure():
    (c,) = parse_constraint("[](f=5 => E a.(a=0 & [](a'=1) & [](a=2 => g=1)))")
    assert isinstance(c, Always)
    (imp,) = c.body
    assert isinstance(imp, Implies)
    (ex,) = imp.body
    assert isinstance(ex, Exists) and ex.var == "a"
    assert len(ex.body) == 3


def test_left_limit_postfix():
    (imp,) = parse_constraint("ht- = 0 => ht' = -c * (ht'-)")
    (g,) = imp.guard
    assert g.lhs == Var("ht", 0, True)
    (body,) = imp.body
    assert body.rhs == BinOp("*", Neg(Var("c")), Var("ht", 1, True))


def test_subtraction_is_not_a_left_limit():
    (a,) = parse_constraint("x - y = 0")
    assert a.lhs == BinOp("-", Var("x"), Var("y"))


def test_conjunction_is_a_set():
    assert parse_constraint("x = 1 & x = 1 /\\ y = 2") == parse_constraint("y = 2 & x = 1")


@pytest.mark.parametrize("text, fragment", [
    ("M <=> .", "unexpected"),
    ("A <=> x = 1/0.\nA.", "division by literal zero"),
    ("A <=> x = 1/y.\nA.", "numeric literals"),
    ("A <=> x = 1.\nA <=> x = 2.\nA.", "duplicate module"),
    ("A <=> x = 1.\nA, B.", "undefined module"),
    ("A <=> x = 1.\nB <=> x = 2.\nA << B << A.", "more than once"),
    ("A <=> a#1 = 0.\nA.", "reserved"),
    ("A <=> (x = 1 => y = 2) => z = 3.\nA.", "guard"),
])
def test_parse_errors(text, fragment):
    with pytest.raises(ParseError) as info:
        parse_program(text)
    assert fragment in str(info.value)


def test_error_position():
    with pytest.raises(ParseError) as info:
        parse_program("A <=> x = 1.\nB <=> y = .\nA, B.")
    assert str(info.value).startswith("2:")


@pytest.mark.parametrize("name", ["bouncing_ball", "bouncing_ball_vmax", "timer_pulse", "timer_jump", "pulse_flip"])
def test_program_round_trip(name):
    prog = parse_program((PROGRAMS / f"{name}.hydla").read_text())
    again = parse_program(format_program(prog))
    assert again.ds == prog.ds
    assert again.declaration == prog.declaration


# -- random expressions survive print and parse ----------------------------------------------

names = st.sampled_from(["x", "y", "ht", "v_1"])
leaves = st.one_of(
    st.fractions(min_value=0, max_value=100, max_denominator=16).map(Num),
    st.builds(Var, names, st.integers(0, 2), st.booleans()),
)
exprs = st.recursive(
    leaves,
    lambda sub: st.one_of(
        st.builds(Neg, sub),
        st.builds(BinOp, st.sampled_from("+-*"), sub, sub),
        st.builds(lambda a, n: BinOp("/", a, Num(n)), sub,
                  st.fractions(min_value=1, max_value=9, max_denominator=4)),
    ),
    max_leaves=6,
)
atoms = st.builds(Atom, exprs, st.sampled_from(["=", "!=", "<", "<=", ">", ">="]), exprs)
constraints = st.recursive(
    atoms,
    lambda sub: st.one_of(
        st.builds(lambda b: Always(frozenset(b)), st.lists(sub, min_size=1, max_size=2)),
        st.builds(lambda g, b: Implies(frozenset(g), frozenset(b)),
                  st.lists(atoms, min_size=1, max_size=2), st.lists(sub, min_size=1, max_size=2)),
        st.builds(lambda b: Exists("a", frozenset(b)), st.lists(sub, min_size=1, max_size=2)),
    ),
    max_leaves=4,
)


@settings(max_examples=300, deadline=None)
@given(st.lists(constraints, min_size=1, max_size=3))
def test_print_parse_identity(cs):
    # the parser folds negated literals, so compare from the first parse on
    parsed = parse_constraint(format_set(frozenset(cs)))
    text = format_set(parsed)
    assert parse_constraint(text) == parsed, text


@settings(max_examples=200, deadline=None)
@given(constraints)
def test_print_is_stable(c):
    text = format_set(parse_constraint(format_constraint(c)))
    assert format_set(parse_constraint(text)) == text
