import json
import math
import sys
import textwrap

import numpy as np
import pytest

from conftest import regular_patch
from topoant.errors import AdapterError, AdapterTimeout, NonMonotoneGrid, ParseError
from topoant.external import (
    AdapterConfig,
    ExternalSimulator,
    parse_csv,
    parse_touchstone,
    run_external,
)
from topoant.simulator import CostLedger, SweepSpec

SWEEP = SweepSpec(5.0, 6.0, 3)


@pytest.fixture
def solver(tmp_path):
    """Stub solver: copies a canned reply next to the request, or misbehaves on demand."""
    script = tmp_path / "solver.py"
    script.write_text(textwrap.dedent("""
        import json, pathlib, shutil, sys, time
        request, reply, canned, mode = sys.argv[1:5]
        json.loads(pathlib.Path(request).read_text())
        if mode == "sleep":
            time.sleep(10)
        if mode == "fail":
            print("solver license missing", file=sys.stderr)
            sys.exit(3)
        if mode != "silent":
            shutil.copy(canned, reply)
    """))

    def make(canned_text, mode="ok", reply_name="reply.csv", timeout_s=30.0):
        canned = tmp_path / f"canned_{reply_name}"
        canned.write_text(canned_text)
        return AdapterConfig(command=[sys.executable, str(script), "{request}", "{reply}",
                                      str(canned), mode],
                             exchange_dir=str(tmp_path / "exchange"), timeout_s=timeout_s,
                             reply_name=reply_name)
    return make


CSV = "freq_GHz,S11_dB\n5.0,-3.5\n5.5,-12.25\n# trailing comment\n6.0,-4.0\n"


def test_csv_round_trip(solver):
    led = CostLedger()
    r = run_external(regular_patch(), SWEEP, solver(CSV), "high", ledger=led, phase="high_tr")
    np.testing.assert_array_equal(r.freqs, [5.0, 5.5, 6.0])
    np.testing.assert_array_equal(r.levels, [-3.5, -12.25, -4.0])
    assert r.fidelity == "high"
    assert led.n_high == 1 and led.by_phase[("high_tr", "high")] == 1
    assert 0 < led.seconds["high"] < 30


def test_request_file_contents(solver, tmp_path):
    x = regular_patch(L=5)
    run_external(x, SWEEP, solver(CSV), "low")
    (req,) = (tmp_path / "exchange").glob("*/request.json")
    rec = json.loads(req.read_text())
    assert rec["design"]["L"] == 5 and rec["design"]["x"] == x.tolist()
    assert rec["sweep"] == {"f_start_GHz": 5.0, "f_stop_GHz": 6.0, "n_points": 3}
    assert rec["fidelity"] == "low"


def test_touchstone_reply(solver):
    text = "! one-port\n# MHZ S RI R 50\n5000 0.3 0.4\n5500 0.06 0.08\n"
    r = run_external(regular_patch(), SWEEP, solver(text, reply_name="reply.s1p"))
    np.testing.assert_allclose(r.freqs, [5.0, 5.5])
    np.testing.assert_allclose(r.levels, [20 * math.log10(0.5), 20 * math.log10(0.1)])


def test_simulator_wrapper(solver):
    cfg = solver(CSV)
    r = ExternalSimulator(cfg)(regular_patch(), SWEEP, "low")
    assert r.fidelity == "low" and r.levels.size == 3


def test_timeout(solver):
    with pytest.raises(AdapterTimeout):
        run_external(regular_patch(), SWEEP, solver(CSV, mode="sleep", timeout_s=0.5))


def test_nonzero_exit(solver):
    with pytest.raises(AdapterError, match="license"):
        run_external(regular_patch(), SWEEP, solver(CSV, mode="fail"))


def test_missing_reply(solver):
    with pytest.raises(AdapterError, match="no reply"):
        run_external(regular_patch(), SWEEP, solver(CSV, mode="silent"))


def test_malformed_row_names_index():
    with pytest.raises(ParseError, match="row 3") as err:
        parse_csv("freq_GHz,S11_dB\n5.0,-3\n5.5, abc\n")
    assert err.value.line == 3


def test_single_column_row():
    with pytest.raises(ParseError, match="row 2"):
        parse_csv("5.0,-3\n5.5\n")


def test_csv_without_header_and_semicolons():
    r = parse_csv("5.0;-3\n5.5;-4\n")
    np.testing.assert_array_equal(r.levels, [-3, -4])


def test_decreasing_grid():
    with pytest.raises(NonMonotoneGrid):
        parse_csv("6.0,-3\n5.0,-4\n")


def test_empty_reply():
    with pytest.raises(ParseError):
        parse_csv("# nothing\n")


@pytest.mark.parametrize("fmt,a,b,want", [
    ("DB", -12.5, 45.0, -12.5),
    ("MA", 0.25, 10.0, 20 * math.log10(0.25)),
    ("RI", 0.3, -0.4, 20 * math.log10(0.5)),
])
def test_touchstone_formats(fmt, a, b, want):
    r = parse_touchstone(f"# GHZ S {fmt} R 50\n5.5 {a} {b}\n")
    assert r.levels[0] == pytest.approx(want)
    assert r.freqs[0] == 5.5


def test_touchstone_default_units():
    # Touchstone defaults: GHz, magnitude-angle
    r = parse_touchstone("5.5 0.1 0\n")
    assert r.levels[0] == pytest.approx(-20.0)


def test_touchstone_hz():
    r = parse_touchstone("# HZ S DB R 50\n5.5e9 -7 0\n")
    assert r.freqs[0] == pytest.approx(5.5)


def test_touchstone_zero_magnitude():
    with pytest.raises(ParseError, match="row 2"):
        parse_touchstone("# GHZ S RI R 50\n5.5 0 0\n")


def test_touchstone_rejects_impedance_files():
    with pytest.raises(ParseError):
        parse_touchstone("# GHZ Z RI R 50\n5.5 1 0\n")


def test_adapter_config_from_record():
    cfg = AdapterConfig.from_record({"command": "solver --batch {request}", "timeout_s": 5})
    assert cfg.command == ["solver", "--batch", "{request}"] and cfg.timeout_s == 5.0
    with pytest.raises(ValueError):
        AdapterConfig.from_record({"command": ""})
