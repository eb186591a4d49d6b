import json
import subprocess
import sys
from fractions import Fraction

import numpy as np
import pytest

from mtsctc import fileio, randomized as rnd
from mtsctc.bridge import ctc_two_time_state
from mtsctc.circuit import CircuitSpec, Node, Wire
from mtsctc.cli import main
from mtsctc.mts import Direction, MtInstrument, MtVector, SpaceLabel, two_time_operator, two_time_state

F, B = Direction.FORWARD, Direction.BACKWARD


def put(tmp_path, name, doc):
    path = tmp_path / name
    fileio.write(str(path), doc)
    return str(path)


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def machine(argv, capsys):
    code, out, err = run(argv + ["--format", "machine"], capsys)
    return code, json.loads(out), err


def z_instrument():
    return MtInstrument(tuple((str(k), two_time_operator(np.diag(np.eye(2)[k]), "S", 0, 1).density())
                              for k in range(2)))


def order_doc(times):
    facs = [(SpaceLabel(s, Fraction(t), d), 2) for (s, d), t in zip((("S1", F), ("S2", B), ("S3", F)), times)]
    coeffs = np.arange(8, dtype=complex) + 1
    return fileio.mts_doc(MtVector.from_factors(facs, coeffs).density())


def test_convert_entangled_two_time_state(tmp_path, capsys):
    src = put(tmp_path, "ts.json", fileio.mts_doc(ctc_two_time_state("A", 2, "A", 1, 2).density()))
    out = str(tmp_path / "circ.json")
    code, rep, _ = machine(["convert", src, "--out", out], capsys)
    assert code == 0
    names = {c["name"] for c in rep["checks"]}
    assert {"reproduces_input", "claimed_constant", "ctc_budget"} <= names
    assert rep["results"]["teleporting_ctcs"] == 1
    circ = fileio.circuit_from_doc(fileio.read(out))
    assert len(circ.ctc_pairs) == rep["results"]["ctc_count"]
    code, back, _ = machine(["convert", out, "--out", str(tmp_path / "back.json")], capsys)
    assert code == 0 and back["results"]["direction"] == "circuit->mts"


def test_convert_identity_operator_has_no_teleport(tmp_path, capsys):
    src = put(tmp_path, "to.json", fileio.mts_doc(two_time_operator(np.eye(2), "S", 0, 1).density()))
    code, rep, _ = machine(["convert", src, "--out", str(tmp_path / "c.json")], capsys)
    assert code == 0 and rep["results"]["teleporting_ctcs"] == 0


def test_convert_strategy_flag(tmp_path, capsys):
    src = put(tmp_path, "ts.json", fileio.mts_doc(ctc_two_time_state("A", 2, "A", 1, 2).density()))
    for s in ("b2", "f1"):
        code, rep, _ = machine(["convert", src, "--strategy", s, "--out", str(tmp_path / "c.json")], capsys)
        assert code == 0 and rep["results"]["strategy"] == s


def test_convert_without_out_prints_document(tmp_path, capsys):
    src = put(tmp_path, "to.json", fileio.mts_doc(two_time_operator(np.eye(2), "S", 0, 1).density()))
    code, out, err = run(["convert", src], capsys)
    assert code == 0
    assert json.loads(out)["kind"] == "circuit"
    assert "[PASS]" in err


def test_malformed_file(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"kind": "mts",\n  "factors": [}\n')
    code, _, err = run(["convert", str(path)], capsys)
    assert code == 2 and "line 2" in err


def test_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["convert"])
    assert exc.value.code == 2


def test_prob_abl_fixture(tmp_path, capsys):
    plus, minus = np.array([1, 1]) / np.sqrt(2), np.array([1, -1]) / np.sqrt(2)
    obj = put(tmp_path, "pm.json", fileio.mts_doc(two_time_state(plus, minus, "S", 0, 1).density()))
    inst = put(tmp_path, "z.json", fileio.mt_instrument_doc(z_instrument()))
    code, rep, _ = machine(["prob", obj, inst], capsys)
    assert code == 0
    assert rep["results"]["probabilities"] == {"0": pytest.approx(0.5, abs=1e-12), "1": pytest.approx(0.5, abs=1e-12)}


def test_prob_post_selection_impossible(tmp_path, capsys):
    obj = put(tmp_path, "o.json", fileio.mts_doc(two_time_state([1, 0], [0, 1], "S", 0, 1).density()))
    trivial = MtInstrument((("1", two_time_operator(np.eye(2), "S", 0, 1).density()),))
    inst = put(tmp_path, "t.json", fileio.mt_instrument_doc(trivial))
    code, _, err = run(["prob", obj, inst], capsys)
    assert code == 1 and "PostSelectionImpossible" in err


def test_prob_ctc_free_comb(tmp_path, capsys):
    g = np.random.default_rng(3)
    u, v = rnd.unitary(g, 2), rnd.unitary(g, 2)
    circ = CircuitSpec((Wire("i", 2, 0), Wire("m", 2, 1), Wire("n", 2, 2), Wire("o", 2, 3)),
                       (Node("gate", ("i",), ("m",), (u,)), Node("slot", ("m",), ("n",)),
                        Node("gate", ("n",), ("o",), (v,))))
    obj = put(tmp_path, "c.json", fileio.circuit_doc(circ))
    insts = [rnd.instrument(g, [("m", 2)], [("n", 2)], 3)]
    inst = put(tmp_path, "i.json", fileio.comb_instruments_doc(rnd.density(g, 2), insts))
    code, rep, _ = machine(["prob", obj, inst], capsys)
    assert code == 0
    assert abs(rep["results"]["denominator"] - 1.0) <= 1e-8
    assert "abl_agrees" in {c["name"] for c in rep["checks"]}


@pytest.mark.parametrize("a,b,relation", [
    ((0, 1, 2), (2, 1, 0), "incomparable"),
    ((0, 1, 2), (0, 1, 2), "equal"),
])
def test_order_verdicts(tmp_path, capsys, a, b, relation):
    fa, fb = put(tmp_path, "a.json", order_doc(a)), put(tmp_path, "b.json", order_doc(b))
    code, rep, _ = machine(["order", fa, fb], capsys)
    assert code == 0 and rep["results"]["relation"] == relation


def test_order_two_time_state_above_operator(tmp_path, capsys):
    k = np.random.default_rng(0).normal(size=(2, 2))
    ts = MtVector.from_factors([(SpaceLabel("A", 0, F), 2), (SpaceLabel("B", 1, B), 2)], k.reshape(-1))
    to = MtVector.from_factors([(SpaceLabel("A", 1, F), 2), (SpaceLabel("B", 0, B), 2)], k.reshape(-1))
    fa = put(tmp_path, "ts.json", fileio.mts_doc(ts.density()))
    fb = put(tmp_path, "to.json", fileio.mts_doc(to.density()))
    code, rep, _ = machine(["order", fa, fb], capsys)
    assert code == 0 and rep["results"]["relation"] == "strictly_above"
    assert len(rep["results"]["witness"]) == 2


def test_order_not_isomorphic_is_a_verdict(tmp_path, capsys):
    fa = put(tmp_path, "a.json", order_doc((0, 1, 2)))
    fb = put(tmp_path, "b.json", fileio.mts_doc(two_time_operator(np.eye(2), "S", 0, 1).density()))
    code, rep, _ = machine(["order", fa, fb], capsys)
    assert code == 0 and rep["results"]["relation"] == "not_isomorphic"


def test_selftest_passes_and_is_deterministic(capsys):
    code, first, _ = run(["selftest", "--seed", "7", "--format", "machine"], capsys)
    _, second, _ = run(["selftest", "--seed", "7", "--format", "machine"], capsys)
    assert code == 0 and first == second


def test_selftest_injected_fault(capsys):
    code, out, _ = run(["selftest", "--inject", "corrupt-choi"], capsys)
    assert code == 1
    failed = [l for l in out.splitlines() if "[FAIL]" in l]
    assert len(failed) == 1 and "pctc.channel_trace_preserving" in failed[0]


def test_selftest_report_file(tmp_path, capsys):
    out = tmp_path / "r.json"
    code, _, _ = run(["selftest", "--out", str(out)], capsys)
    assert code == 0 and fileio.read(str(out))["kind"] == "report"


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "mtsctc", "selftest", "--format", "machine"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["ok"] is True
