"""Conversions between multiple-time states and P-CTC circuits/combs."""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .circuit import CircuitSpec, Node, Wire, choi as circuit_choi, circuit_comb
from .errors import (
    DimensionMismatch,
    MissingTimeLabels,
    NotEqualized,
    NotPositive,
    SpaceMismatch,
    ZeroOperator,
)
from .linalg import complete_unitary, swap
from .mts import (
    Direction,
    MtDensityVector,
    MtInstrument,
    MtSpace,
    MtVector,
    SpaceLabel,
    as_operator,
    compose_density,
    is_positive,
    spectral_decompose,
)
from .pctc import (
    ChoiOperator,
    CombInstrument,
    PctcComb,
    Role,
    link_all,
    state_choi,
    trace_choi,
)

ZERO_TOL = 1e-14
EQUAL_TOL = 1e-8
BISECT_TOL = 1e-12
BISECT_MAX_ITER = 200


@dataclass
class TwoTimeDecomposition:
    """C = r * sum_i a_i |psi_i><phi_i| with orthonormal bra vectors phi_i.

    ``psi`` and ``basis`` hold the vectors as columns.
    """

    r: float
    a: np.ndarray
    psi: np.ndarray
    basis: np.ndarray

    @property
    def d(self) -> int:
        return len(self.a)

    def operator(self) -> np.ndarray:
        return self.r * (self.psi * self.a) @ self.basis.conj().T


def decompose_two_time(c) -> TwoTimeDecomposition:
    """Split an operator column by column in the computational basis."""
    c = np.asarray(c, dtype=complex)
    if c.ndim != 2:
        raise DimensionMismatch("expected a matrix")
    norms = np.linalg.norm(c, axis=0)
    r = float(norms.max()) if norms.size else 0.0
    if r <= ZERO_TOL:
        raise ZeroOperator("operator is zero")
    dout, din = c.shape
    psi = np.zeros((dout, din), dtype=complex)
    a = np.zeros(din)
    for i in range(din):
        if norms[i] <= ZERO_TOL * r:
            psi[i % dout, i] = 1.0
            continue
        a[i] = norms[i] / r
        psi[:, i] = c[:, i] / norms[i]
    return TwoTimeDecomposition(r, a, psi, np.eye(din, dtype=complex))


def equalize_basis(dec: TwoTimeDecomposition) -> tuple[TwoTimeDecomposition, list[float]]:
    """Rotate the bra basis until every coefficient has the same magnitude.

    Each round pairs the largest and the smallest unfixed coefficients and
    bisects for the angle that brings the first to 1/sqrt(d).

    Returns:
        The new decomposition (coefficients all 1/sqrt(d)) and the angles used.
    """
    m = dec.operator()
    scale = float(np.linalg.norm(m))
    if scale <= ZERO_TOL:
        raise ZeroOperator("operator is zero")
    mn = m / scale
    phi = dec.basis.astype(complex).copy()
    d = phi.shape[1]
    target = 1.0 / d
    angles = []

    def weight(v):
        return float(np.linalg.norm(mn @ v) ** 2)

    unfixed = list(range(d))
    while len(unfixed) >= 2:
        w = [weight(phi[:, i]) for i in unfixed]
        if max(abs(x - target) for x in w) <= BISECT_TOL:
            break
        i_max = unfixed[int(np.argmax(w))]
        i_min = unfixed[int(np.argmin(w))]
        v_max, v_min = phi[:, i_max].copy(), phi[:, i_min].copy()

        def f(theta):
            return weight(np.cos(theta) * v_max + np.sin(theta) * v_min) - target

        lo, hi = 0.0, math.pi / 2
        theta = 0.5 * (lo + hi)
        for _ in range(BISECT_MAX_ITER):
            theta = 0.5 * (lo + hi)
            val = f(theta)
            if abs(val) <= BISECT_TOL:
                break
            if val > 0:
                lo = theta
            else:
                hi = theta
        angles.append(theta)
        phi[:, i_max] = np.cos(theta) * v_max + np.sin(theta) * v_min
        phi[:, i_min] = np.sin(theta) * v_max - np.cos(theta) * v_min
        unfixed.remove(i_max)
        if len(unfixed) == 1:
            break
    images = mn @ phi
    a = np.linalg.norm(images, axis=0)
    psi = images / np.where(a > 0, a, 1.0)
    return TwoTimeDecomposition(scale, a, psi, phi), angles


def two_pctc_local_unitaries(dec: TwoTimeDecomposition) -> list[np.ndarray]:
    """U_i = (W_i (x) 1) C_{V_i} on system (x) qubit, with Tr_Q(U_i)|phi_i> = 2 a_i |psi_i>."""
    d = dec.d
    if dec.psi.shape[0] != d:
        raise DimensionMismatch("the two-CTC construction needs a square operator")
    us = []
    for i in range(d):
        a = float(dec.a[i])
        b = math.sqrt(max(0.0, 1.0 - a * a))
        v = np.array([[a, -b], [b, a]], dtype=complex)
        ph = dec.basis[:, i]
        proj = np.outer(ph, ph.conj())
        cv = np.kron(proj, v) + np.kron(np.eye(d) - proj, np.eye(2))
        w = complete_unitary(dec.psi[:, i], 0) @ complete_unitary(ph, 0).conj().T
        us.append(np.kron(w, np.eye(2)) @ cv)
    return us


@dataclass(frozen=True)
class StretchRecord:
    system: str
    direction: Direction
    from_time: Fraction
    to_time: Fraction
    via_ctc: bool = False


@dataclass
class ConstructionPlan:
    """A circuit realising a target up to ``claimed_constant``.

    ``target = claimed_constant * realized`` where the target is an operator
    for two-time constructions and a density vector for MTS conversions.
    """

    circuit: CircuitSpec
    ctc_count: int
    ctc_dims: list
    claimed_constant: complex
    stretches: list = field(default_factory=list)
    mixture_weights: list = field(default_factory=list)
    term_constants: list = field(default_factory=list)

    def __post_init__(self):
        if self.ctc_count != len(self.ctc_dims):
            raise ValueError("ctc_count must equal len(ctc_dims)")


def _controlled(branches: Sequence[np.ndarray], projectors: Sequence[np.ndarray]) -> np.ndarray:
    return sum(np.kron(u, p) for u, p in zip(branches, projectors))


def build_two_pctc_construction(dec: TwoTimeDecomposition) -> ConstructionPlan:
    """Two-CTC circuit (dimensions d and 2) realising C / (r d)."""
    d = dec.d
    us = two_pctc_local_unitaries(dec)
    projs = [np.outer(dec.basis[:, i], dec.basis[:, i].conj()) for i in range(d)]
    ctrl = _controlled(us, projs)
    t0, t1 = Fraction(0), Fraction(1)
    wires = (
        Wire("S", d, t0), Wire("S'", d, t1),
        Wire("A", d, t0 - 1), Wire("A'", d, t1 + 1),
        Wire("Q", 2, t0 - 1), Wire("Q'", 2, t1 + 1),
        Wire("s1", d), Wire("a1", d),
    )
    nodes = (
        Node("gate", ("S", "A"), ("s1", "a1"), (swap(d, d),), name="swap"),
        Node("gate", ("s1", "Q", "a1"), ("S'", "Q'", "A'"), (ctrl,), name="controlled"),
    )
    circ = CircuitSpec(wires, nodes, (("A'", "A"), ("Q'", "Q")), {"construction": "two-ctc"})
    return ConstructionPlan(circ, 2, [d, 2], complex(dec.r * d))


def _check_equalized(dec: TwoTimeDecomposition) -> None:
    if dec.a.max() - dec.a.min() > EQUAL_TOL:
        raise NotEqualized(f"coefficient spread {dec.a.max() - dec.a.min():.3g}")


def _single_ctrl(dec: TwoTimeDecomposition) -> tuple[np.ndarray, complex]:
    _check_equalized(dec)
    d = dec.d
    if dec.psi.shape[0] != d:
        raise DimensionMismatch("the one-CTC construction needs a square operator")
    ws, projs = [], []
    for i in range(d):
        ph = dec.basis[:, i]
        ws.append(complete_unitary(dec.psi[:, i], 0) @ complete_unitary(ph, 0).conj().T)
        projs.append(np.outer(ph, ph.conj()))
    k = dec.r * float(np.mean(dec.a)) * d
    return _controlled(ws, projs), complex(k)


def build_single_pctc_construction(dec: TwoTimeDecomposition) -> ConstructionPlan:
    """One-CTC circuit for an equalised decomposition."""
    d = dec.d
    ctrl, k = _single_ctrl(dec)
    t0, t1 = Fraction(0), Fraction(1)
    wires = (Wire("S", d, t0), Wire("S'", d, t1), Wire("A", d, t0 - 1), Wire("A'", d, t1 + 1),
             Wire("s1", d), Wire("a1", d))
    nodes = (
        Node("gate", ("S", "A"), ("s1", "a1"), (swap(d, d),), name="swap"),
        Node("gate", ("s1", "a1"), ("S'", "A'"), (ctrl,), name="controlled"),
    )
    circ = CircuitSpec(wires, nodes, (("A'", "A"),), {"construction": "one-ctc"})
    return ConstructionPlan(circ, 1, [d], k)


def _embed(c: np.ndarray, dim: int) -> np.ndarray:
    out = np.zeros((dim, dim), dtype=complex)
    out[: c.shape[0], : c.shape[1]] = c
    return out


def _isometry(d_small: int, d_big: int) -> np.ndarray:
    return np.eye(d_big, d_small, dtype=complex)


class _Builder:
    """Accumulates wires and nodes with collision-free labels."""

    def __init__(self, reserved=()):
        self.wires: list[Wire] = []
        self.nodes: list[Node] = []
        self.ctc: list[tuple[str, str]] = []
        self.taken = set(reserved)

    def wire(self, base: str, dim: int, time=None, system=None) -> str:
        lab, k = base, 0
        while lab in self.taken:
            k += 1
            lab = f"{base}#{k}"
        self.taken.add(lab)
        self.wires.append(Wire(lab, dim, time, system))
        return lab

    def node(self, *args, **kw):
        self.nodes.append(Node(*args, **kw))


def _realize(b: _Builder, ins: list[str], outs: list[str], in_dims, out_dims,
             ops: Sequence[np.ndarray], weights: Optional[Sequence[float]],
             t_past, t_future) -> list[complex]:
    """Add encode / swap / controlled / decode nodes for one or more operators.

    All operators share the same encoders and CTC; several operators turn the
    controlled gate into a mixture node. Returns each operator's constant.
    """
    din = int(np.prod(in_dims)) if len(in_dims) else 1
    dout = int(np.prod(out_dims)) if len(out_dims) else 1
    big = max(din, dout)
    s_in = b.wire("enc", big)
    s1, a1 = b.wire("s1", big), b.wire("a1", big)
    a_in = b.wire("ctc", big, t_past)
    a_out = b.wire("ctc'", big, t_future)
    s_out = b.wire("dec", big)
    enc = _isometry(din, big)
    if not ins:
        b.node("prep", (), (s_in,), (enc[:, 0],), name="encode")
    else:
        b.node("gate" if din == big else "kraus", tuple(ins), (s_in,), (enc,), name="encode")
    b.node("gate", (s_in, a_in), (s1, a1), (swap(big, big),), name="swap")
    ctrls, ks = [], []
    for op in ops:
        dec, _ = equalize_basis(decompose_two_time(_embed(op, big)))
        ctrl, k = _single_ctrl(dec)
        ctrls.append(ctrl)
        ks.append(k)
    if len(ctrls) == 1:
        b.node("gate", (s1, a1), (s_out, a_out), (ctrls[0],), name="controlled")
    else:
        b.node("mixture", (s1, a1), (s_out, a_out), tuple(ctrls), tuple(weights), name="controlled")
    dec_op = _isometry(dout, big).conj().T
    if not outs:
        b.node("postselect", (s_out,), (), (dec_op[0],), name="decode")
    else:
        b.node("gate" if dout == big else "kraus", (s_out,), tuple(outs), (dec_op,), name="decode")
    b.ctc.append((a_out, a_in))
    return ks


def encode_multisystem(c, in_dims: Sequence[int], out_dims: Sequence[int],
                       in_labels: Optional[Sequence[str]] = None,
                       out_labels: Optional[Sequence[str]] = None) -> ConstructionPlan:
    """One-CTC realisation of an operator between composite systems."""
    c = np.asarray(c, dtype=complex)
    din = int(np.prod(in_dims)) if len(in_dims) else 1
    dout = int(np.prod(out_dims)) if len(out_dims) else 1
    if c.shape != (dout, din):
        raise DimensionMismatch(f"operator shape {c.shape} vs dims {(dout, din)}")
    in_labels = list(in_labels or [f"in{k}" for k in range(len(in_dims))])
    out_labels = list(out_labels or [f"out{k}" for k in range(len(out_dims))])
    b = _Builder(in_labels + out_labels)
    for lab, d in zip(in_labels, in_dims):
        b.wires.append(Wire(lab, d, Fraction(0)))
    for lab, d in zip(out_labels, out_dims):
        b.wires.append(Wire(lab, d, Fraction(1)))
    (k,) = _realize(b, in_labels, out_labels, list(in_dims), list(out_dims), [c], None,
                    Fraction(-1), Fraction(2))
    circ = CircuitSpec(b.wires, b.nodes, b.ctc, {"construction": "multisystem"})
    return ConstructionPlan(circ, 1, [max(din, dout)], k)


class Strategy(enum.Enum):
    USE_B2 = "b2"
    USE_F1 = "f1"
    AUTO = "auto"


@dataclass(frozen=True)
class Partition:
    b1: tuple
    b2: tuple
    f1: tuple
    f2: tuple


def partition_spaces(space: MtSpace) -> Partition:
    """Split factors by whether they sit before or after the other direction."""
    fw = space.forward()
    bw = space.backward()
    b2 = tuple(f for f in bw if any(f[0].time > g[0].time for g in fw))
    f1 = tuple(f for f in fw if any(f[0].time < g[0].time for g in bw))
    # a tie between directions reads as backward-then-forward, as in a 2TO
    b1 = tuple(f for f in bw if f not in b2)
    f2 = tuple(f for f in fw if f not in f1)
    return Partition(b1, b2, f1, f2)


def _dim(factors) -> int:
    return int(np.prod([d for _, d in factors])) if factors else 1


def choose_strategy(part: Partition, strategy: Strategy) -> Strategy:
    strategy = Strategy(strategy)
    if strategy is not Strategy.AUTO:
        return strategy
    if len(part.b2) != len(part.f1):
        return Strategy.USE_B2 if len(part.b2) < len(part.f1) else Strategy.USE_F1
    if _dim(part.f1) < _dim(part.b2):
        return Strategy.USE_F1
    return Strategy.USE_B2


def _wire_labels(space: MtSpace) -> dict:
    counts = {}
    for lab in space.labels:
        counts[lab.system] = counts.get(lab.system, 0) + 1
    out = {}
    for lab in space.labels:
        if counts[lab.system] == 1:
            out[lab] = lab.system
        else:
            tag = "f" if lab.direction is Direction.FORWARD else "b"
            out[lab] = f"{lab.system}@{lab.time}{tag}"
    return out


def _weighted_sum(terms) -> np.ndarray:
    return sum(p * np.outer(v.flat, v.flat.conj()) for p, v in terms)


def mts_to_pctc_comb(eta: MtDensityVector, strategy=Strategy.AUTO,
                     terms: Optional[Sequence[tuple]] = None, tol: float = 1e-9) -> ConstructionPlan:
    """P-CTC circuit whose comb is proportional to ``eta``.

    Args:
        eta: positive density vector.
        strategy: which set of out-of-order systems to send through CTCs.
        terms: optional ``(weight, MtVector)`` decomposition of ``eta`` to use
            instead of the spectral one.
        tol: tolerance for positivity and for checking ``terms``.
    """
    if not is_positive(eta, tol):
        raise NotPositive("density vector is not positive semidefinite")
    if terms is None:
        terms = spectral_decompose(eta, tol)
    else:
        terms = [(float(p), v) for p, v in terms]
        for _, v in terms:
            if v.space != eta.space:
                raise SpaceMismatch("decomposition term on a different space")
        err = np.linalg.norm(_weighted_sum(terms) - eta.op)
        if err > tol * max(1.0, np.linalg.norm(eta.op)):
            raise SpaceMismatch(f"terms do not add up to the density vector ({err:.3g})")
    if not terms:
        raise ZeroOperator("density vector is zero")
    space = eta.space
    part = partition_spaces(space)
    chosen = choose_strategy(part, strategy)
    teleport = set(part.b2 if chosen is Strategy.USE_B2 else part.f1)
    labels = _wire_labels(space)
    times = [l.time for l in space.labels] or [Fraction(0)]
    t_past, t_future = min(times) - 1, max(times) + 1

    bw, fw = space.backward(), space.forward()
    b_times = [f[0].time for f in bw]
    f_times = [f[0].time for f in fw]
    if chosen is Strategy.USE_F1:
        tau_b = max(b_times) if b_times else (min(f_times) - 1 if f_times else Fraction(0))
        f2_times = [f[0].time for f in part.f2]
        tau_f = min(f2_times) if f2_times else tau_b + 1
    else:
        tau_f = min(f_times) if f_times else (max(b_times) + 1 if b_times else Fraction(1))
        b1_times = [f[0].time for f in part.b1]
        tau_b = max(b1_times) if b1_times else tau_f - 1

    b = _Builder(labels.values())
    stretches = []
    enc_inputs, dec_outputs = [], []
    for lab, d in bw:
        name = labels[lab]
        b.wires.append(Wire(name, d, lab.time, lab.system))
        if (lab, d) in teleport:
            fut = b.wire(name + ">", d, t_future, lab.system)
            past = b.wire(name + "<", d, t_past, lab.system)
            b.node("wire", (name,), (fut,), name=f"carry {name}")
            b.ctc.append((fut, past))
            enc_inputs.append(past)
        else:
            enc_inputs.append(name)
        if lab.time != tau_b:
            stretches.append(StretchRecord(lab.system, lab.direction, tau_b, lab.time,
                                           (lab, d) in teleport))
    for lab, d in fw:
        name = labels[lab]
        b.wires.append(Wire(name, d, lab.time, lab.system))
        if (lab, d) in teleport:
            core = b.wire(name + ">", d, t_future, lab.system)
            past = b.wire(name + "<", d, t_past, lab.system)
            b.ctc.append((core, past))
            b.node("wire", (past,), (name,), name=f"deliver {name}")
            dec_outputs.append(core)
        else:
            dec_outputs.append(name)
        if lab.time != tau_f:
            stretches.append(StretchRecord(lab.system, lab.direction, tau_f, lab.time,
                                           (lab, d) in teleport))

    tele_dims = [d for lab, d in list(bw) + list(fw) if (lab, d) in teleport]
    ops = [as_operator(v)[0] for _, v in terms]
    weights = [p for p, _ in terms]
    probe = b.nodes[:], b.wires[:], list(b.ctc), set(b.taken)
    ks = _realize(b, enc_inputs, dec_outputs, [d for _, d in bw], [d for _, d in fw],
                  ops, [1.0 / len(ops)] * len(ops), t_past, t_future)
    tele_factor = float(np.prod(tele_dims)) if tele_dims else 1.0
    ks = [k * tele_factor for k in ks]
    mags = [p * abs(k) ** 2 for p, k in zip(weights, ks)]
    total = float(sum(mags))
    p_prime = [m / total for m in mags]
    if len(ops) > 1:
        # rebuild with the reweighted mixture probabilities
        b.nodes, b.wires, b.ctc, b.taken = probe[0], probe[1], probe[2], probe[3]
        _realize(b, enc_inputs, dec_outputs, [d for _, d in bw], [d for _, d in fw],
                 ops, p_prime, t_past, t_future)
    wm = {w.label: w.dim for w in b.wires}
    ctc_dims = [wm[o] for o, _ in b.ctc]
    meta = {
        "construction": "mts",
        "strategy": chosen.value,
        "partition": {k: len(getattr(part, k)) for k in ("b1", "b2", "f1", "f2")},
    }
    circ = CircuitSpec(b.wires, b.nodes, b.ctc, meta)
    return ConstructionPlan(circ, len(b.ctc), ctc_dims, complex(total), stretches,
                            p_prime, ks)


def expected_ctc_dims(space: MtSpace, strategy=Strategy.AUTO) -> list[int]:
    """CTC budget from the counting rule: chosen set plus one realisation CTC."""
    part = partition_spaces(space)
    chosen = choose_strategy(part, strategy)
    tele = part.b2 if chosen is Strategy.USE_B2 else part.f1
    bw_f = [f for f in space.backward() if f in tele]
    fw_f = [f for f in space.forward() if f in tele]
    return [d for _, d in bw_f + fw_f] + [max(_dim(space.backward()), _dim(space.forward()))]


def ctc_two_time_state(out_system: str, t_out, in_system: str, t_in, dim: int) -> MtVector:
    """sum_i <i| on the CTC source (later) with |i> on the CTC target (earlier)."""
    factors = [(SpaceLabel(out_system, Fraction(t_out), Direction.BACKWARD), dim),
               (SpaceLabel(in_system, Fraction(t_in), Direction.FORWARD), dim)]
    return MtVector.from_factors(factors, np.eye(dim).reshape(-1))


def choi_to_density(op: ChoiOperator, times: dict, names: Optional[dict] = None) -> MtDensityVector:
    """Inputs become backward factors, outputs forward factors.

    ``times`` maps ``(label, role)`` to the time of that system.
    """
    names = names or {}
    factors = []
    for s in op.systems:
        direction = Direction.BACKWARD if s.role is Role.IN else Direction.FORWARD
        factors.append((SpaceLabel(names.get(s.label, s.label), times[s.key], direction), s.dim))
    return MtDensityVector.from_factors(factors, op.matrix)


def _comb_times(c: PctcComb) -> dict:
    if c.time_labels is None:
        raise MissingTimeLabels("the comb carries no time labels")
    times = {}
    for j, (labels, role) in enumerate(c.system_sets()):
        for lab in labels:
            times[(lab, role)] = c.time_labels[j]
    return times


def pctc_comb_to_mts(c: PctcComb) -> MtDensityVector:
    """Density vector on the comb's systems, with each CTC as an entangled
    two-time state composed in when the open comb is available."""
    times = _comb_times(c)
    names = c.system_names or {}
    if c.base is None or not c.ctc_pairs:
        return choi_to_density(c.choi, times, names)
    t0, tn = c.time_labels[0], c.time_labels[-1]
    ext = dict(times)
    for o, i in c.ctc_pairs:
        ext[(o, Role.OUT)] = tn
        ext[(i, Role.IN)] = t0
    eta = choi_to_density(c.base.choi, ext, names)
    for o, i in c.ctc_pairs:
        d = c.base.choi.systems[c.base.choi.index(o, Role.OUT)].dim
        psi = ctc_two_time_state(names.get(o, o), tn, names.get(i, i), t0, d)
        eta = compose_density(eta, psi.density())
    return eta


def comb_setting_to_mt_instrument(c: PctcComb, rho0, instruments: Sequence[CombInstrument]) -> MtInstrument:
    """Initial state, slot instruments and the final trace as one MT instrument."""
    times = _comb_times(c)
    names = c.system_names or {}
    flipped = {(lab, role.flipped()): t for (lab, role), t in times.items()}
    choi = c.choi
    past = [(l, choi.systems[choi.index(l, Role.IN)].dim) for l in c.past]
    future = [(l, choi.systems[choi.index(l, Role.OUT)].dim) for l in c.future]
    if rho0 is None:
        rho0 = np.ones((1, 1))
    fixed = [state_choi(rho0, past), trace_choi(future)]
    outcomes = []
    for combo in itertools.product(*[inst.outcomes for inst in instruments]):
        op = link_all(fixed + [m for _, m in combo])
        outcomes.append((tuple(l for l, _ in combo), choi_to_density(op, flipped, names)))
    return MtInstrument(tuple(outcomes))


def evaluate_plan(plan: ConstructionPlan, route: str = "branches") -> PctcComb:
    return circuit_comb(plan.circuit, route)


def circuit_to_mts(c: CircuitSpec, route: str = "branches") -> MtDensityVector:
    """Density vector of a time-labelled circuit with its CTCs closed."""
    return pctc_comb_to_mts(circuit_comb(c, route))


COMPOSITION_MAX_DIM = 2 ** 10


def circuit_to_mts_by_composition(c: CircuitSpec, max_dim: int = COMPOSITION_MAX_DIM) -> MtDensityVector:
    """Same object built by opening every CTC and composing in one entangled
    two-time state per loop. Meant as a cross-check for small circuits;
    raises DimensionMismatch when the opened circuit is wider than ``max_dim``."""
    wm = c.wire_map
    ins, outs = c.boundary()
    ends = set(ins) | set(outs) | {w for p in c.ctc_pairs for w in p}
    width = int(np.prod([wm[w].dim for w in ends])) if ends else 1
    if width > max_dim:
        raise DimensionMismatch(f"opened circuit has dimension {width} > {max_dim}")
    opened = CircuitSpec(c.wires, c.nodes, (), dict(c.metadata))
    op = circuit_choi(opened, "link")
    times, names = {}, {}
    for s in op.systems:
        w = wm[s.label]
        if w.time is None:
            raise MissingTimeLabels(f"wire {w.label!r} has no time label")
        times[s.key] = w.time
        names[s.label] = w.system_name
    eta = choi_to_density(op, times, names)
    for o, i in c.ctc_pairs:
        psi = ctc_two_time_state(names[o], wm[o].time, names[i], wm[i].time, wm[o].dim)
        eta = compose_density(eta, psi.density())
    return eta
