from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mtsctc import randomized as rnd
from mtsctc.circuit import (
    CircuitSpec,
    Node,
    Wire,
    choi,
    circuit_comb,
    comb_sets,
    expand_mixtures,
    pure_operator,
)
from mtsctc.errors import DimensionMismatch, InvalidCircuit
from mtsctc.linalg import swap
from mtsctc.pctc import Role, pctc_assist_map, choi_of_map
from oracles import apply_kraus


def one_gate(u, d=2):
    return CircuitSpec((Wire("i", d, 0), Wire("o", d, 1)), (Node("gate", ("i",), ("o",), (u,)),))


def test_validation_errors():
    with pytest.raises(InvalidCircuit):
        CircuitSpec((Wire("a", 2), Wire("a", 2)), ())
    with pytest.raises(InvalidCircuit):
        CircuitSpec((Wire("a", 2), Wire("b", 2)), (Node("gate", ("a",), ("b",), (np.ones((2, 2)),)),))
    with pytest.raises(InvalidCircuit):
        CircuitSpec((Wire("a", 2), Wire("b", 2)), (Node("gate", ("a",), ("c",), (np.eye(2),)),))
    with pytest.raises(InvalidCircuit):
        Node("teleport")
    with pytest.raises(InvalidCircuit):
        Wire("a", 2, 0.5)
    with pytest.raises(DimensionMismatch):
        CircuitSpec((Wire("a", 2), Wire("b", 3)), (Node("kraus", ("a",), ("b",), (np.ones((3, 2)),)),),
                    (("b", "a"),))


def test_pure_operator_of_gate():
    u = rnd.unitary(np.random.default_rng(0), 3)
    k, ins, outs = pure_operator(one_gate(u, 3))
    assert ins == ["i"] and outs == ["o"]
    assert np.allclose(k, u)


def test_swap_loop_pure_operator():
    c = CircuitSpec((Wire("S", 2), Wire("A", 2), Wire("S'", 2), Wire("A'", 2)),
                    (Node("gate", ("S", "A"), ("S'", "A'"), (swap(2, 2),)),), (("A'", "A"),))
    k, _, _ = pure_operator(c)
    assert np.allclose(k, np.eye(2) / 2)


def test_choi_routes_agree_with_ctc(rng):
    ks = rnd.channel_kraus(rng, 4, 4, 2)
    c = CircuitSpec((Wire("S", 2), Wire("A", 2), Wire("S'", 2), Wire("A'", 2)),
                    (Node("kraus", ("S", "A"), ("S'", "A'"), tuple(ks)),), (("A'", "A"),))
    a, b = choi(c, "branches"), choi(c, "link")
    assert np.allclose(a.matrix, b.matrix)
    direct = pctc_assist_map(choi_of_map(ks, [("S", 2), ("A", 2)], [("S'", 2), ("A'", 2)]), ("A'", "A"))
    assert np.allclose(a.matrix, direct.matrix)


def test_prep_postselect_discard(rng):
    rho = rnd.density(rng, 2)
    bra = np.array([1, 0], dtype=complex)
    c = CircuitSpec((Wire("p", 2), Wire("q", 2), Wire("r", 2)),
                    (Node("prep", (), ("p",), (rho,)),
                     Node("gate", ("p",), ("q",), (np.eye(2),)),
                     Node("wire", ("q",), ("r",)),
                     Node("postselect", ("r",), (), (bra,))))
    assert np.isclose(choi(c).scalar(), rho[0, 0])
    assert np.isclose(choi(c, "link").scalar(), rho[0, 0])
    d = CircuitSpec((Wire("p", 2),), (Node("prep", (), ("p",), (rho,)), Node("discard", ("p",), ())))
    assert np.isclose(choi(d).scalar(), 1.0)


def test_expand_mixtures_matches(rng):
    us = [rnd.unitary(rng, 2) for _ in range(3)]
    w = [0.2, 0.5, 0.3]
    c = CircuitSpec((Wire("i", 2, 0), Wire("o", 2, 1)), (Node("mixture", ("i",), ("o",), tuple(us), tuple(w)),))
    e = expand_mixtures(c)
    assert not any(n.kind == "mixture" for n in e.nodes)
    rho = rnd.density(rng, 2)
    want = apply_kraus([np.sqrt(p) * u for p, u in zip(w, us)], rho)
    for circ, route in ((c, "branches"), (e, "branches"), (e, "link")):
        j = choi(circ, route)
        got = np.einsum("ij,iajb->ab", rho, j.matrix.reshape(2, 2, 2, 2))
        assert np.allclose(got, want)


def test_comb_sets_grouping():
    sets, times = comb_sets([("a", 0, Role.IN), ("b", 1, Role.OUT), ("c", 2, Role.IN), ("d", 3, Role.OUT)])
    assert sets == [("a",), ("b",), ("c",), ("d",)]
    assert times == [0, 1, 2, 3]
    sets, times = comb_sets([("b", 1, Role.OUT)])
    assert sets == [(), ("b",)]
    assert times[0] < times[1]
    sets, _ = comb_sets([("a", 0, Role.IN), ("b", 0, Role.OUT)])
    assert sets == [("a",), ("b",)]


def test_circuit_comb_time_labels():
    c = one_gate(np.eye(2))
    comb = circuit_comb(c)
    assert comb.past == ("i",) and comb.future == ("o",)
    assert comb.time_labels == (Fraction(0), Fraction(1))


@given(st.integers(0, 10**6))
def test_routes_agree_on_random_kraus_chains(seed):
    g = np.random.default_rng(seed)
    k1, k2 = rnd.channel_kraus(g, 2, 3, 2), rnd.channel_kraus(g, 3, 2, 2)
    c = CircuitSpec((Wire("a", 2), Wire("b", 3), Wire("c", 2)),
                    (Node("kraus", ("a",), ("b",), tuple(k1)), Node("kraus", ("b",), ("c",), tuple(k2))))
    assert np.allclose(choi(c).matrix, choi(c, "link").matrix)
