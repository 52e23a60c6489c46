from fractions import Fraction
from pathlib import Path

import pytest

from hydla.simulator import SimOptions, inject_continuity_defaults, simulate
from hydla.traceio import load_program

PROGRAMS = Path(__file__).resolve().parent.parent / "programs"


def program(name, defaults=True, exclude=()):
    prog = load_program(PROGRAMS / f"{name}.hydla")
    return inject_continuity_defaults(prog, tuple(exclude)) if defaults else prog


def run(name, until=10, exclude=(), **kw):
    prog = program(name, exclude=exclude)
    opts = SimOptions(until=Fraction(until), exclude_defaults=tuple(exclude), **kw)
    return prog, simulate(prog, opts)


@pytest.fixture
def programs_dir():
    return PROGRAMS


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
