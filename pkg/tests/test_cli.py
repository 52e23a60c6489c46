import json
import shutil
import subprocess
import sys

import pytest

from hydla.cli import main

from conftest import PROGRAMS


def hydla(*args, capsys=None):
    code = main([str(a) for a in args])
    out = capsys.readouterr() if capsys else None
    return code, out


def test_run_json(capsys, tmp_path):
    out = tmp_path / "bb.json"
    code, _ = hydla("run", PROGRAMS / "bouncing_ball.hydla", "--until", "4", "--out", out,
                    capsys=capsys)
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["branches"][0]["status"] == "horizon"
    assert doc["options"]["until"] == {"n": "4", "d": "1"}


def test_run_then_check(capsys, tmp_path):
    out = tmp_path / "timer_pulse.json"
    assert hydla("run", PROGRAMS / "timer_pulse.hydla", "--out", out, capsys=capsys)[0] == 0
    code, res = hydla("check", PROGRAMS / "timer_pulse.hydla", "--certificate", out, capsys=capsys)
    assert code == 0
    assert res.out.startswith("accept")


def test_check_rejects_corrupted(capsys):
    code, res = hydla("check", PROGRAMS / "timer_jump.hydla", "--certificate",
                      PROGRAMS / "timer_jump_corrupted.cert.json", capsys=capsys)
    assert code == 1
    assert "(s2) at {5}" in res.out


def test_no_solution_exit_code(capsys):
    code, res = hydla("run", PROGRAMS / "pulse_flip.hydla", "--until", "5", capsys=capsys)
    assert code == 2
    assert "right continuity of b" in res.err


def test_underdetermined_exit_code(capsys):
    code, res = hydla("run", PROGRAMS / "pulse_flip.hydla", "--until", "5",
                      "--exclude-default", "CONT(b,0)", capsys=capsys)
    assert code == 4
    assert "underdetermined" in res.err


def test_zeno_reported(capsys):
    code, res = hydla("run", PROGRAMS / "bouncing_ball.hydla", "--until", "10", capsys=capsys)
    assert code == 0
    doc = json.loads(res.out)
    assert doc["branches"][0]["accumulation"] == {"n": "30", "d": "7"}


def test_csv_output(capsys):
    code, res = hydla("run", PROGRAMS / "timer_pulse.hydla", "--format", "csv", "--step", "1", capsys=capsys)
    assert code == 0
    assert res.out.splitlines()[0].split(",")[0] == "t"


def test_parse_error_exit_code(capsys, tmp_path):
    bad = tmp_path / "bad.hydla"
    bad.write_text("A <=> x = .\nA.\n")
    code, res = hydla("run", bad, capsys=capsys)
    assert code == 3
    assert "1:" in res.err


def test_missing_file(capsys, tmp_path):
    assert hydla("run", tmp_path / "nope.hydla", capsys=capsys)[0] == 3


def test_malformed_certificate(capsys, tmp_path):
    cert = tmp_path / "c.json"
    cert.write_text("{}")
    assert hydla("check", PROGRAMS / "timer_pulse.hydla", "--certificate", cert, capsys=capsys)[0] == 3


def test_explicit_poset_flag(capsys, tmp_path):
    src = tmp_path / "timer.hydla"
    shutil.copy(PROGRAMS / "timer_pulse.hydla", src)
    # no sidecar next to the copy: the poset must come from the flag
    assert hydla("poset", src, capsys=capsys)[0] == 3
    code, res = hydla("poset", src, "--explicit-poset", PROGRAMS / "timer_pulse.poset.json", capsys=capsys)
    assert code == 0
    assert "{A, C} < {A, B, C}" in res.out


def test_poset_listing(capsys):
    code, res = hydla("poset", PROGRAMS / "bouncing_ball.hydla", capsys=capsys)
    assert code == 0
    assert res.out == ("sets:\n  {BOUNCE, FALL, INIT, PARAMS}\n  {BOUNCE, INIT, PARAMS}\n"
                       "edges:\n  {BOUNCE, INIT, PARAMS} < {BOUNCE, FALL, INIT, PARAMS}\n")


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "hydla", "poset", str(PROGRAMS / "pulse_flip.hydla")],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert "{G, J} < {G, H, J}" in res.stdout


def test_bad_rational_argument(capsys):
    with pytest.raises(SystemExit):
        main(["run", str(PROGRAMS / "timer_pulse.hydla"), "--until", "ten"])
