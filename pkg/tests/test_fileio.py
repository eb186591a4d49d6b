import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mtsctc import fileio, randomized as rnd
from mtsctc.bridge import mts_to_pctc_comb, pctc_comb_to_mts
from mtsctc.errors import ParseError
from mtsctc.mts import MtInstrument, two_time_operator, two_time_state


def round_trip(doc):
    text = fileio.dumps(doc)
    return text, fileio.loads(text)


def test_mts_round_trip_is_byte_identical():
    eta = pctc_comb_to_mts(rnd.comb(np.random.default_rng(0), 1, n_ctc=1))
    text, doc = round_trip(fileio.mts_doc(eta))
    again = fileio.mts_from_doc(doc)
    assert again.space == eta.space and np.array_equal(again.op, eta.op)
    assert fileio.dumps(fileio.mts_doc(again)) == text


def test_vector_documents():
    doc = fileio.mts_doc(two_time_state([1, 0], [1, 0], "S", 0, 1).density())
    vec = dict(doc)
    del vec["operator"]
    vec["vector"] = [[1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]
    eta = fileio.mts_from_doc(vec)
    assert np.allclose(eta.op, fileio.mts_from_doc(doc).op)


def test_circuit_round_trip_is_byte_identical():
    eta = pctc_comb_to_mts(rnd.comb(np.random.default_rng(1), 1, n_ctc=1))
    circ = mts_to_pctc_comb(eta).circuit
    text, doc = round_trip(fileio.circuit_doc(circ))
    again = fileio.circuit_from_doc(doc)
    assert fileio.dumps(fileio.circuit_doc(again)) == text
    assert again.ctc_pairs == circ.ctc_pairs


def test_instrument_round_trips():
    inst = MtInstrument(tuple((str(k), two_time_operator(np.diag(np.eye(2)[k]), "S", 0, 1).density())
                              for k in range(2)))
    text, doc = round_trip(fileio.mt_instrument_doc(inst))
    again = fileio.instrument_from_doc(doc)
    assert fileio.dumps(fileio.mt_instrument_doc(again)) == text
    g = np.random.default_rng(2)
    comb = rnd.comb(g, 2)
    insts = rnd.comb_instruments(g, comb)
    rho = rnd.past_state(g, comb)
    _, doc = round_trip(fileio.comb_instruments_doc(rho, insts))
    rho2, insts2 = fileio.instrument_from_doc(doc)
    assert np.allclose(rho, rho2)
    for a, b in zip(insts, insts2):
        for (la, ma), (lb, mb) in zip(a.outcomes, b.outcomes):
            assert la == lb and np.allclose(ma.matrix, mb.matrix)


def test_parse_errors_name_the_problem():
    with pytest.raises(ParseError, match="line 1"):
        fileio.loads("{not json")
    with pytest.raises(ParseError, match="kind"):
        fileio.loads("[1, 2]")
    with pytest.raises(ParseError, match="format"):
        fileio.loads(json.dumps({"kind": "mts", "format": "other"}))
    with pytest.raises(ParseError, match="expected a 'circuit'"):
        fileio.circuit_from_doc({"kind": "mts"})
    bad = fileio.mts_doc(two_time_state([1, 0], [1, 0], "S", 0, 1).density())
    bad["factors"][0]["time"] = 0.5
    with pytest.raises(ParseError, match="rational"):
        fileio.mts_from_doc(bad)
    with pytest.raises(ParseError, match="re, im"):
        fileio.dec_array([1, 2, 3])


@given(st.lists(st.complex_numbers(max_magnitude=1e6, allow_nan=False, allow_infinity=False),
                min_size=1, max_size=8))
def test_arrays_round_trip(values):
    a = np.array(values, dtype=complex)
    text = json.dumps(fileio.enc_array(a))
    assert np.array_equal(fileio.dec_array(json.loads(text)), a)


@given(st.fractions())
def test_fractions_round_trip(t):
    assert fileio.dec_fraction(fileio.enc_fraction(t)) == t
