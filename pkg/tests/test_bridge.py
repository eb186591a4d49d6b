from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mtsctc import randomized as rnd
from mtsctc.bridge import (
    Strategy,
    build_single_pctc_construction,
    build_two_pctc_construction,
    choose_strategy,
    circuit_to_mts,
    circuit_to_mts_by_composition,
    comb_setting_to_mt_instrument,
    ctc_two_time_state,
    decompose_two_time,
    encode_multisystem,
    equalize_basis,
    evaluate_plan,
    expected_ctc_dims,
    mts_to_pctc_comb,
    partition_spaces,
    pctc_comb_to_mts,
    two_pctc_local_unitaries,
)
from mtsctc.circuit import CircuitSpec, Node, Wire, expand_mixtures, pure_operator
from mtsctc.errors import NotEqualized, NotPositive, SpaceMismatch, ZeroOperator
from mtsctc.linalg import partial_trace, proportionality_residual
from mtsctc.mts import (
    Direction,
    MtDensityVector,
    MtSpace,
    MtVector,
    SpaceLabel,
    abl_probability,
    two_time_operator,
    two_time_state,
)
from mtsctc.order import OrderClass, classify
from mtsctc.pctc import (
    ChoiOperator,
    CombInstrument,
    build_comb,
    choi_of_map,
    close_ctc,
    comb_probability,
    identity_choi,
    pctc_assist_comb,
    state_choi,
)

F, B = Direction.FORWARD, Direction.BACKWARD


def rel(a, b):
    return np.linalg.norm(a - b) / max(1.0, np.linalg.norm(a))


def plan_residual(target, plan):
    k, _, _ = pure_operator(plan.circuit)
    return rel(target, plan.claimed_constant * k)


def lab(s, t, d):
    return SpaceLabel(s, Fraction(t), d)


def test_decompose_examples():
    dec = decompose_two_time(np.diag([1, 0.5]))
    assert dec.r == 1 and np.allclose(dec.a, [1, 0.5]) and np.allclose(dec.psi, np.eye(2))
    u = rnd.unitary(np.random.default_rng(1), 3)
    dec = decompose_two_time(u)
    assert np.isclose(dec.r, 1) and np.allclose(dec.a, 1) and np.allclose(dec.psi, u)
    with pytest.raises(ZeroOperator):
        decompose_two_time(np.zeros((2, 2)))


def test_qubit_trace_of_diagonal_operator():
    a0 = 0.3
    dec = decompose_two_time(np.diag([a0, 1]))
    u0 = two_pctc_local_unitaries(dec)[0]
    assert np.allclose(partial_trace(u0, [2, 2], [1]), 2 * np.diag([a0, 1]))


def test_two_ctc_plan_examples():
    u = rnd.unitary(np.random.default_rng(2), 3)
    plan = build_two_pctc_construction(decompose_two_time(u))
    assert plan.ctc_dims == [3, 2]
    assert plan_residual(u, plan) <= 1e-9
    psi = rnd.ket(np.random.default_rng(3), 3)
    rank_one = np.outer(psi, np.eye(3)[0])
    assert plan_residual(rank_one, build_two_pctc_construction(decompose_two_time(rank_one))) <= 1e-9


def test_equalize_examples():
    dec, angles = equalize_basis(decompose_two_time(np.diag([1.0, 0])))
    assert np.isclose(angles[0], np.pi / 4)
    assert np.allclose(dec.a * dec.r, 1 / np.sqrt(2))
    assert np.allclose(np.abs(dec.psi), [[1, 1], [0, 0]])
    assert np.allclose(np.abs(dec.basis), 1 / np.sqrt(2))
    h = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    _, angles = equalize_basis(decompose_two_time(h))
    assert angles == []


def test_equalize_random_d5():
    c = rnd.ginibre(np.random.default_rng(4), 5, 5)
    dec, _ = equalize_basis(decompose_two_time(c))
    assert np.abs(dec.a - 5 ** -0.5).max() <= 1e-10
    assert rel(c, dec.operator()) <= 1e-9


def test_single_ctc_examples():
    c = np.diag([1.0, 0])
    dec, _ = equalize_basis(decompose_two_time(c))
    plan = build_single_pctc_construction(dec)
    assert plan.ctc_dims == [2]
    assert plan_residual(c, plan) <= 1e-9
    u = rnd.unitary(np.random.default_rng(5), 3)
    assert plan_residual(u, build_single_pctc_construction(decompose_two_time(u))) <= 1e-9
    with pytest.raises(NotEqualized):
        build_single_pctc_construction(decompose_two_time(np.diag([1.0, 0.5])))


def test_multisystem_two_qubits():
    c = rnd.ginibre(np.random.default_rng(6), 4, 4)
    plan = encode_multisystem(c, [2, 2], [2, 2])
    assert plan.ctc_dims == [4]
    k, ins, outs = pure_operator(plan.circuit)
    assert ins == ["in0", "in1"] and outs == ["out0", "out1"]
    assert rel(c, plan.claimed_constant * k) <= 1e-9


def test_multisystem_padding():
    c = rnd.ginibre(np.random.default_rng(7), 4, 2)
    plan = encode_multisystem(c, [2], [2, 2])
    assert plan.ctc_dims == [4]
    k, _, _ = pure_operator(plan.circuit)
    assert rel(c, plan.claimed_constant * k) <= 1e-9


def test_partition_examples():
    ts = two_time_state([1, 0], [1, 0], "S", 0, 1).density().space
    p = partition_spaces(ts)
    assert len(p.b2) == 1 and len(p.f1) == 1 and not p.b1 and not p.f2
    to = two_time_operator(np.eye(2), "S", 0, 1).density().space
    p = partition_spaces(to)
    assert len(p.b1) == 1 and len(p.f2) == 1 and not p.b2 and not p.f1
    space = MtSpace(((lab("F", 0, F), 2), (lab("B1", 1, B), 2), (lab("B2", 2, B), 2), (lab("B3", 3, B), 2)))
    p = partition_spaces(space)
    assert len(p.b2) == 3 and len(p.f1) == 1
    assert choose_strategy(p, Strategy.AUTO) is Strategy.USE_F1


def test_ctc_wire_is_entangled_two_time_state():
    psi = ctc_two_time_state("A", 2, "A", 1, 2)
    assert classify(psi.space) is OrderClass.TWO_TS
    assert np.allclose(psi.coeffs, np.eye(2))


def test_identity_comb_is_identity_operator():
    c = CircuitSpec((Wire("i", 2, 0, "S"), Wire("o", 2, 1, "S")), (Node("gate", ("i",), ("o",), (np.eye(2),)),))
    eta = circuit_to_mts(c)
    want = two_time_operator(np.eye(2), "S", 0, 1).density()
    assert eta.space == want.space
    assert np.allclose(eta.op, want.op)


def teleport_comb(psi):
    """State prepared in the future and carried by a CTC to the slot."""
    d = len(psi)
    teeth = [identity_choi("X", "M", d), state_choi(np.outer(psi, psi.conj()), [("X'", d)])]
    return pctc_assist_comb(build_comb(teeth, [None]), [("X'", "X")], [0, 1, 2, 3])


def povm_instrument(povm, label="M"):
    d = povm[0].shape[0]
    return CombInstrument(tuple((str(k), ChoiOperator([(label, d, "in")], m.T)) for k, m in enumerate(povm)))


def test_teleport_comb_matches_born_and_abl(rng):
    psi = rnd.ket(rng, 2)
    comb = teleport_comb(psi)
    eta = pctc_comb_to_mts(comb)
    for _ in range(20):
        povm = rnd.povm(rng, 2, 3)
        inst = [povm_instrument(povm)]
        table = comb_probability(comb, None, inst).probs
        born = [np.vdot(psi, m @ psi).real for m in povm]
        abl = abl_probability(eta, comb_setting_to_mt_instrument(comb, None, inst))
        for k, b in enumerate(born):
            assert abs(table[(str(k),)] - b) <= 1e-10
            assert abs(abl[(str(k),)] - b) <= 1e-10


def test_two_time_state_conversion_f1():
    eta = MtVector.from_factors([(lab("F", 0, F), 2), (lab("B", 1, B), 2)],
                                rnd.ginibre(np.random.default_rng(8), 2, 2).reshape(-1)).density()
    plan = mts_to_pctc_comb(eta, Strategy.USE_F1)
    assert plan.ctc_count == 2 and plan.ctc_dims == expected_ctc_dims(eta.space, Strategy.USE_F1)
    back = circuit_to_mts(plan.circuit)
    k, res = proportionality_residual(eta.op, back.op)
    assert res <= 1e-9 and np.isclose(k, plan.claimed_constant)


def test_identity_2to_needs_no_teleport():
    eta = two_time_operator(np.eye(2), "S", 0, 1).density()
    plan = mts_to_pctc_comb(eta)
    assert plan.ctc_dims == [2]
    assert not any(s.via_ctc for s in plan.stretches)


def test_mixture_of_two_operators():
    g = np.random.default_rng(9)
    us = [two_time_operator(rnd.unitary(g, 2), "S", 0, 1) for _ in range(2)]
    terms = [(0.5, u) for u in us]
    eta = MtDensityVector(us[0].space, sum(p * u.density().op for p, u in terms))
    plan = mts_to_pctc_comb(eta, terms=terms)
    (mix,) = [n for n in plan.circuit.nodes if n.kind == "mixture"]
    assert np.allclose(mix.weights, plan.mixture_weights)
    for circ, route in ((plan.circuit, "branches"), (expand_mixtures(plan.circuit), "link")):
        back = circuit_to_mts(circ, route)
        assert proportionality_residual(eta.op, back.op)[1] <= 1e-9


def test_conversion_rejects():
    bad = MtDensityVector(MtSpace(((lab("S", 0, F), 2),)), np.diag([1.0, -1.0]))
    with pytest.raises(NotPositive):
        mts_to_pctc_comb(bad)
    eta = two_time_operator(np.eye(2), "S", 0, 1).density()
    with pytest.raises(SpaceMismatch):
        mts_to_pctc_comb(eta, terms=[(1.0, two_time_operator(np.eye(2), "S", 0, 2))])
    with pytest.raises(SpaceMismatch):
        mts_to_pctc_comb(eta, terms=[(2.0, two_time_operator(np.eye(2), "S", 0, 1))])


@given(st.integers(0, 10**6), st.integers(0, 1), st.integers(0, 2))
def test_round_trip_random_combs(seed, slots, ctcs):
    g = np.random.default_rng(seed)
    comb = rnd.comb(g, slots, n_ctc=ctcs, memory=2 if slots else 1)
    eta = pctc_comb_to_mts(comb)
    plan = mts_to_pctc_comb(eta)
    assert plan.ctc_dims == expected_ctc_dims(eta.space)
    back = pctc_comb_to_mts(evaluate_plan(plan))
    k, res = proportionality_residual(eta.op, back.ordered(eta.space.labels))
    assert res <= 1e-9 and np.isclose(k, plan.claimed_constant)
    insts, rho0 = rnd.comb_instruments(g, comb), rnd.past_state(g, comb)
    table = comb_probability(comb, rho0, insts).probs
    abl = abl_probability(eta, comb_setting_to_mt_instrument(comb, rho0, insts))
    assert all(abs(table[o] - abl[o]) <= 1e-8 for o in table)


@given(st.integers(0, 10**6))
def test_composition_route_matches_closed_ctcs(seed):
    g = np.random.default_rng(seed)
    ks = rnd.channel_kraus(g, 4, 4, 2)
    c = CircuitSpec((Wire("S", 2, 0), Wire("A", 2, -1), Wire("S'", 2, 1), Wire("A'", 2, 2)),
                    (Node("kraus", ("S", "A"), ("S'", "A'"), tuple(ks)),), (("A'", "A"),))
    a, b = circuit_to_mts(c, "link"), circuit_to_mts_by_composition(c)
    assert a.space == b.space
    assert proportionality_residual(a.op, b.op)[1] <= 1e-9


@given(st.integers(0, 10**6))
def test_loop_closure_is_basis_independent(seed):
    g = np.random.default_rng(seed)
    ks = rnd.channel_kraus(g, 4, 4, 2)
    u = rnd.unitary(g, 2)
    rot = [np.kron(np.eye(2), u) @ k @ np.kron(np.eye(2), u.conj().T) for k in ks]
    sys_in, sys_out = [("S", 2), ("A", 2)], [("S'", 2), ("A'", 2)]
    a = close_ctc(choi_of_map(ks, sys_in, sys_out), "A'", "A")
    b = close_ctc(choi_of_map(rot, sys_in, sys_out), "A'", "A")
    assert np.allclose(a.matrix, b.matrix)
