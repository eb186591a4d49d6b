"""Seeded end-to-end consistency checks run by ``mtsctc selftest``.

Output depends only on the seed: no timings, no host details.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from typing import Optional

import numpy as np

from . import randomized as rnd
from .bridge import (
    build_single_pctc_construction,
    build_two_pctc_construction,
    comb_setting_to_mt_instrument,
    decompose_two_time,
    equalize_basis,
    expected_ctc_dims,
    mts_to_pctc_comb,
    evaluate_plan,
    pctc_comb_to_mts,
    two_pctc_local_unitaries,
)
from .circuit import pure_operator
from .linalg import complete_unitary, kron, partial_trace, proportionality_residual
from .mts import (
    Direction,
    MtVector,
    abl_probability,
    abl_probability_pure,
    compose,
    two_time_operator,
    two_time_state,
)
from .order import OrderProfile, Relation, decide_order, replay_witness, verify_extremality
from .pctc import (
    ChoiOperator,
    choi_of_map,
    comb_probability,
    link,
    pctc_assist_map,
    pctc_map_probability,
    trace_preservation_residual,
)
from .report import Check, Report

INJECTIONS = ("corrupt-choi",)
TOL = 1e-9


def _rel(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(1.0, np.linalg.norm(a)))


def _prop(target, got) -> float:
    return proportionality_residual(target, got)[1]


def _linalg(rng, rep: Report) -> None:
    a, b, c = (rnd.ginibre(rng, 2, 2) for _ in range(3))
    rep.add(Check.below("linalg.kron_associative", _rel(kron(kron(a, b), c), kron(a, kron(b, c))), TOL))
    ra, rb = rnd.density(rng, 3), rnd.density(rng, 2)
    rep.add(Check.below("linalg.partial_trace_product", _rel(partial_trace(kron(ra, rb), [3, 2], [1]), ra), TOL))
    u = complete_unitary(rnd.ket(rng, 5), 2)
    rep.add(Check.below("linalg.completed_unitary", _rel(u.conj().T @ u, np.eye(5)), TOL))
    k = complex(rng.normal(), rng.normal())
    m = rnd.ginibre(rng, 3, 3)
    got, res = proportionality_residual(k * m, m)
    rep.add(Check.below("linalg.proportionality_constant", abs(got - k) + res, TOL))


def _mts(rng, rep: Report) -> None:
    plus = np.array([1, 1]) / np.sqrt(2)
    minus = np.array([1, -1]) / np.sqrt(2)
    psi = two_time_state(plus, minus, "S", 0, 1)
    z = [(str(k), two_time_operator(np.diag(np.eye(2)[k]), "S", 0, 1)) for k in range(2)]
    p = abl_probability_pure(psi, z)
    rep.add(Check.below("mts.abl_plus_minus", abs(p["0"] - 0.5) + abs(p["1"] - 0.5), 1e-12))
    x = MtVector(psi.space, rnd.ginibre(rng, 2, 2))
    y = MtVector(psi.space.reversed(), rnd.ginibre(rng, 2, 2))
    rep.add(Check.below("mts.composition_commutes",
                        abs(compose(x, y).scalar() - compose(y, x).scalar()), TOL))
    ph = MtVector(x.space, np.exp(1j * rng.uniform(0, 2 * np.pi)) * x.coeffs)
    q1, q2 = abl_probability_pure(x, z), abl_probability_pure(ph, z)
    rep.add(Check.below("mts.global_phase_invariance", sum(abs(q1[k] - q2[k]) for k in q1), TOL))


def _pctc(rng, rep: Report, inject: Optional[str]) -> None:
    e = rnd.channel(rng, [("S", 2), ("A", 2)], [("S", 2), ("A", 2)], 3)
    if inject == "corrupt-choi":
        bad = e.matrix.copy()
        bad[0, 0] += 0.25
        e = ChoiOperator(e.systems, bad)
    rep.add(Check.below("pctc.channel_trace_preserving", trace_preservation_residual(e), 1e-8,
                        "Tr_out of the Choi operator must be the identity"))
    s = pctc_assist_map(e, "A", "sandwich")
    k = pctc_assist_map(e, "A", "kraus")
    rep.add(Check.below("pctc.sandwich_matches_kraus", _rel(s.matrix, k.matrix), TOL))
    a = rnd.channel(rng, [("X", 2)], [("Y", 2)])
    b = rnd.channel(rng, [("Y", 2)], [("Z", 2)])
    c = rnd.channel(rng, [("Z", 2)], [("W", 2)])
    l1 = link(link(a, b), c).canonical()
    l2 = link(a, link(b, c)).canonical()
    rep.add(Check.below("pctc.link_associative", _rel(l1.matrix, l2.matrix), TOL))
    sw = np.eye(4)[[0, 2, 1, 3]]
    cs = pctc_assist_map(choi_of_map([sw], [("S", 2), ("A", 2)], [("S", 2), ("A", 2)]), "A")
    rho, povm = rnd.density(rng, 2), rnd.povm(rng, 2, 3)
    got = pctc_map_probability(cs, rho, povm)
    want = [float(np.trace(rho @ m).real) for m in povm]
    rep.add(Check.below("pctc.swap_loop_is_identity", _rel(got, want), TOL))


def _bridge(rng, rep: Report) -> None:
    d = 3
    target = rnd.ginibre(rng, d, d)
    dec = decompose_two_time(target)
    us = two_pctc_local_unitaries(dec)
    res = 0.0
    for i, u in enumerate(us):
        lhs = partial_trace(u, [d, 2], [1]) @ dec.basis[:, i]
        res = max(res, _rel(lhs, 2 * dec.a[i] * dec.psi[:, i]))
    rep.add(Check.below("bridge.qubit_trace_identity", res, 1e-10))
    plan = build_two_pctc_construction(dec)
    k, _, _ = pure_operator(plan.circuit)
    rep.add(Check.below("bridge.two_ctc_plan", _rel(target, plan.claimed_constant * k), TOL))
    eq, _ = equalize_basis(dec)
    rep.add(Check.below("bridge.equalized_magnitudes", float(np.abs(eq.a - d ** -0.5).max()), 1e-10))
    plan1 = build_single_pctc_construction(eq)
    k1, _, _ = pure_operator(plan1.circuit)
    rep.add(Check.below("bridge.one_ctc_plan", _rel(target, plan1.claimed_constant * k1), TOL))

    comb = rnd.comb(rng, 1, dim=2, memory=2, n_ctc=1)
    eta = pctc_comb_to_mts(comb)
    mplan = mts_to_pctc_comb(eta)
    rep.add(Check.flag("bridge.ctc_budget", mplan.ctc_dims == expected_ctc_dims(eta.space)))
    back = pctc_comb_to_mts(evaluate_plan(mplan))
    rep.add(Check.below("bridge.mts_round_trip", _prop(eta.op, back.ordered(eta.space.labels)), TOL))
    insts = rnd.comb_instruments(rng, comb)
    rho0 = rnd.past_state(rng, comb)
    table = comb_probability(comb, rho0, insts).probs
    abl = abl_probability(eta, comb_setting_to_mt_instrument(comb, rho0, insts))
    rep.add(Check.below("bridge.comb_matches_abl", max(abs(table[k] - abl[k]) for k in table), 1e-8))


def _order(rep: Report) -> None:
    fails = []
    for n in (1, 2, 3):
        for dirs in itertools.product(list(Direction), repeat=n):
            fails += verify_extremality(dirs).failures
    rep.add(Check.flag("order.extremality_up_to_three", not fails, "; ".join(fails[:3])))
    systems = (("A", Direction.FORWARD), ("B", Direction.BACKWARD))
    v = decide_order(OrderProfile(systems, (0, 1), (1, 0)))
    ok = v.relation is Relation.STRICTLY_ABOVE
    if ok:
        ok = replay_witness(systems, v.start_times, v.witness) == (1, 0)
    rep.add(Check.flag("order.separable_to_ordered_witness", ok))


def run(seed: int = 0, inject: Optional[str] = None) -> Report:
    if inject is not None and inject not in INJECTIONS:
        raise ValueError(f"unknown injection {inject!r}; choose from {INJECTIONS}")
    rep = Report("selftest")
    rep.results = {"seed": int(seed)}
    if inject:
        rep.results["inject"] = inject
    rng = np.random.default_rng(seed)
    _linalg(rng, rep)
    _mts(rng, rep)
    _pctc(rng, rep, inject)
    _bridge(rng, rep)
    _order(rep)
    return rep
