"""Choi operators, link products and post-selected closed timelike curves.

Convention: the Choi operator of a map E with input I is
``sum_ij |i><j|_I (x) E(|i><j|)`` (unnormalised). Each system carries a label
and a role; a label may appear once as an input and once as an output.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .errors import (
    BrokenMemoryChain,
    DimensionMismatch,
    InvalidMeasurement,
    LabelConflict,
    MissingTimeLabels,
    NotTracePreserving,
    PostSelectionImpossible,
    SlotMismatch,
)
from .linalg import max_entangled, partial_trace

TP_TOL = 1e-8
POSTSELECTION_TOL = 1e-12


class Role(enum.Enum):
    IN = "in"
    OUT = "out"

    def flipped(self) -> "Role":
        return Role.OUT if self is Role.IN else Role.IN


@dataclass(frozen=True)
class System:
    label: str
    dim: int
    role: Role

    def __post_init__(self):
        object.__setattr__(self, "role", Role(self.role))
        object.__setattr__(self, "dim", int(self.dim))
        if self.dim < 1:
            raise DimensionMismatch(f"system {self.label} has dimension {self.dim}")

    @property
    def key(self):
        return (self.label, self.role)


Wires = Sequence[tuple]  # [(label, dim), ...]


class ChoiOperator:
    """Dense Choi matrix whose factors follow ``systems`` left to right."""

    def __init__(self, systems: Sequence, matrix):
        systems = tuple(s if isinstance(s, System) else System(*s) for s in systems)
        keys = [s.key for s in systems]
        if len(set(keys)) != len(keys):
            raise LabelConflict(f"repeated (label, role) pair in {keys}")
        n = int(np.prod([s.dim for s in systems])) if systems else 1
        m = np.asarray(matrix, dtype=complex)
        if m.size != n * n:
            raise DimensionMismatch(f"matrix of size {m.size} for total dimension {n}")
        self.systems = systems
        self.matrix = m.reshape(n, n)

    @property
    def dims(self) -> list[int]:
        return [s.dim for s in self.systems]

    @property
    def inputs(self) -> tuple:
        return tuple(s for s in self.systems if s.role is Role.IN)

    @property
    def outputs(self) -> tuple:
        return tuple(s for s in self.systems if s.role is Role.OUT)

    def index(self, label: str, role: Role) -> int:
        for i, s in enumerate(self.systems):
            if s.label == label and s.role is Role(role):
                return i
        raise KeyError(f"no system ({label}, {Role(role).value})")

    def tensor(self) -> np.ndarray:
        d = self.dims
        return self.matrix.reshape(d + d)

    def permuted(self, order: Sequence) -> "ChoiOperator":
        """Reorder factors; ``order`` lists ``(label, role)`` keys."""
        idx = [self.index(l, r) for l, r in order]
        if sorted(idx) != list(range(len(self.systems))):
            raise LabelConflict("permutation must mention every system exactly once")
        n = len(idx)
        t = self.tensor().transpose(idx + [n + i for i in idx])
        return ChoiOperator([self.systems[i] for i in idx], t.reshape(self.matrix.shape))

    def canonical(self) -> "ChoiOperator":
        """Inputs first, then outputs, each in their current relative order."""
        order = [s.key for s in self.inputs] + [s.key for s in self.outputs]
        return self.permuted(order)

    def relabel(self, mapping: Mapping) -> "ChoiOperator":
        """Rename systems; keys are ``(label, role)`` or plain labels."""
        new = []
        for s in self.systems:
            lab = mapping.get(s.key, mapping.get(s.label, s.label))
            new.append(System(lab, s.dim, s.role))
        return ChoiOperator(new, self.matrix)

    def scalar(self) -> complex:
        if self.systems:
            raise LabelConflict("operator still has open systems")
        return complex(self.matrix[0, 0])

    def is_trace_preserving(self, tol: float = TP_TOL) -> bool:
        return trace_preservation_residual(self) <= tol

    def __repr__(self):
        return "ChoiOperator(" + ", ".join(f"{s.label}:{s.role.value}:{s.dim}" for s in self.systems) + ")"


def trace_preservation_residual(c: ChoiOperator) -> float:
    """Frobenius distance between Tr_out C and the identity on the inputs."""
    outs = [i for i, s in enumerate(c.systems) if s.role is Role.OUT]
    reduced = partial_trace(c.matrix, c.dims, outs)
    return float(np.linalg.norm(reduced - np.eye(reduced.shape[0])))


def _wires(ws) -> list[tuple[str, int]]:
    return [(str(l), int(d)) for l, d in ws]


def choi_of_map(kraus: Sequence, inputs: Wires, outputs: Wires) -> ChoiOperator:
    """Choi operator of ``rho -> sum_k K rho K^dagger``.

    Args:
        kraus: matrices of shape (prod out dims, prod in dims).
        inputs: ``(label, dim)`` for each input factor.
        outputs: ``(label, dim)`` for each output factor.
    """
    inputs, outputs = _wires(inputs), _wires(outputs)
    din = int(np.prod([d for _, d in inputs])) if inputs else 1
    dout = int(np.prod([d for _, d in outputs])) if outputs else 1
    j = np.zeros((din * dout, din * dout), dtype=complex)
    for k in kraus:
        k = np.asarray(k, dtype=complex)
        if k.shape != (dout, din):
            raise DimensionMismatch(f"Kraus shape {k.shape}, expected {(dout, din)}")
        v = k.T.reshape(-1)
        j += np.outer(v, v.conj())
    systems = [System(l, d, Role.IN) for l, d in inputs] + [System(l, d, Role.OUT) for l, d in outputs]
    return ChoiOperator(systems, j)


def kraus_of_choi(c: ChoiOperator, tol: float = 1e-12) -> list[np.ndarray]:
    """Kraus operators (out x in, factors in the operator's own order)."""
    cc = c.canonical()
    din = int(np.prod([s.dim for s in cc.inputs])) if cc.inputs else 1
    dout = int(np.prod([s.dim for s in cc.outputs])) if cc.outputs else 1
    h = 0.5 * (cc.matrix + cc.matrix.conj().T)
    w, v = np.linalg.eigh(h)
    scale = max(float(np.abs(w).max()) if w.size else 0.0, 1.0)
    out = []
    for k in range(len(w) - 1, -1, -1):
        if w[k] > tol * scale:
            out.append((np.sqrt(w[k]) * v[:, k]).reshape(din, dout).T)
    return out


def state_choi(rho, wires: Wires) -> ChoiOperator:
    """A state is a map from the trivial system; its Choi operator is itself."""
    wires = _wires(wires)
    return ChoiOperator([System(l, d, Role.OUT) for l, d in wires], rho)


def identity_choi(in_label: str, out_label: str, dim: int) -> ChoiOperator:
    v = max_entangled(dim, normalized=False)
    return ChoiOperator([System(in_label, dim, Role.IN), System(out_label, dim, Role.OUT)],
                        np.outer(v, v.conj()))


def trace_choi(wires: Wires) -> ChoiOperator:
    """Choi operator of the trace (discarding the listed inputs)."""
    wires = _wires(wires)
    n = int(np.prod([d for _, d in wires])) if wires else 1
    return ChoiOperator([System(l, d, Role.IN) for l, d in wires], np.eye(n))


def link(a: ChoiOperator, b: ChoiOperator) -> ChoiOperator:
    """Link product Tr_L[(A^{T_L} (x) 1) (1 (x) B)] over shared labels L.

    Labels join an output on one side to an input on the other. A label
    carried with the same role by both sides is a conflict. Without shared
    labels this is the tensor product.
    """
    pairs = []
    for i, sa in enumerate(a.systems):
        for j, sb in enumerate(b.systems):
            if sa.label != sb.label or sa.role is sb.role:
                continue
            if sa.dim != sb.dim:
                raise DimensionMismatch(f"label {sa.label!r}: dims {sa.dim} vs {sb.dim}")
            pairs.append((i, j))
    na, nb = len(a.systems), len(b.systems)
    ra, ca = list(range(na)), list(range(na, 2 * na))
    base = 2 * na
    rb, cb = list(range(base, base + nb)), list(range(base + nb, base + 2 * nb))
    for i, j in pairs:
        rb[j] = ra[i]
        cb[j] = ca[i]
    used_a = {i for i, _ in pairs}
    used_b = {j for _, j in pairs}
    keep_a = [i for i in range(na) if i not in used_a]
    keep_b = [j for j in range(nb) if j not in used_b]
    out = [ra[i] for i in keep_a] + [rb[j] for j in keep_b]
    out += [ca[i] for i in keep_a] + [cb[j] for j in keep_b]
    res = np.einsum(a.tensor(), ra + ca, b.tensor(), rb + cb, out, optimize=True)
    systems = [a.systems[i] for i in keep_a] + [b.systems[j] for j in keep_b]
    keys = [s.key for s in systems]
    if len(set(keys)) != len(keys):
        dup = next(k for k in keys if keys.count(k) > 1)
        raise LabelConflict(f"label {dup[0]!r} is an {dup[1].value}put on both sides")
    n = int(np.prod([s.dim for s in systems])) if systems else 1
    return ChoiOperator(systems, res.reshape(n, n))


def link_all(ops: Sequence[ChoiOperator]) -> ChoiOperator:
    res = ChoiOperator([], np.ones((1, 1)))
    for op in ops:
        res = link(res, op)
    return res


def close_ctc(c: ChoiOperator, out_label: str, in_label: str) -> ChoiOperator:
    """Feed output ``out_label`` back into input ``in_label`` through a P-CTC.

    Equivalent to pre-selecting a normalised maximally entangled pair and
    post-selecting the same state after the map, which brings the 1/d^2 factor.
    """
    io = c.index(out_label, Role.OUT)
    ii = c.index(in_label, Role.IN)
    d = c.systems[io].dim
    if c.systems[ii].dim != d:
        raise DimensionMismatch(f"CTC wires {out_label}->{in_label} have dims "
                                f"{d} and {c.systems[ii].dim}")
    n = len(c.systems)
    rows, cols = list(range(n)), list(range(n, 2 * n))
    rows[ii] = rows[io]
    cols[ii] = cols[io]
    keep = [k for k in range(n) if k not in (io, ii)]
    out = [rows[k] for k in keep] + [cols[k] for k in keep]
    res = np.einsum(c.tensor(), rows + cols, out) / d**2
    systems = [c.systems[k] for k in keep]
    m = int(np.prod([s.dim for s in systems])) if systems else 1
    return ChoiOperator(systems, res.reshape(m, m))


def apply_map(c: ChoiOperator, rho) -> np.ndarray:
    """E(rho) with ``rho`` over the inputs (in order) and the result over the outputs."""
    ins = [(s.label, s.dim) for s in c.inputs]
    res = link(state_choi(rho, ins), c)
    return res.permuted([s.key for s in c.outputs]).matrix


def _ctc_labels(ctc) -> tuple[str, str]:
    if isinstance(ctc, str):
        return ctc, ctc
    out_label, in_label = ctc
    return out_label, in_label


def pctc_assist_map(e: ChoiOperator, ctc: Union[str, tuple] = "A",
                    method: str = "sandwich") -> ChoiOperator:
    """Map on the remaining systems obtained by sending ``ctc`` through a P-CTC.

    Args:
        e: completely positive map acting on the system together with the
            CTC wire.
        ctc: a label used both as input and output, or an
            ``(output_label, input_label)`` pair.
        method: ``"sandwich"`` evaluates the entangled pre/post-selection
            literally; ``"kraus"`` uses partial traces of Kraus operators.
    """
    a_out, a_in = _ctc_labels(ctc)
    io, ii = e.index(a_out, Role.OUT), e.index(a_in, Role.IN)
    da = e.systems[io].dim
    if e.systems[ii].dim != da:
        raise DimensionMismatch("CTC input and output dimensions differ")
    r_in = [s for k, s in enumerate(e.systems) if s.role is Role.IN and k != ii]
    r_out = [s for k, s in enumerate(e.systems) if s.role is Role.OUT and k != io]
    dri = int(np.prod([s.dim for s in r_in])) if r_in else 1
    dro = int(np.prod([s.dim for s in r_out])) if r_out else 1
    ordered = e.permuted([s.key for s in r_in] + [(a_in, Role.IN)]
                         + [s.key for s in r_out] + [(a_out, Role.OUT)])
    ins_w = [(s.label, s.dim) for s in r_in]
    outs_w = [(s.label, s.dim) for s in r_out]
    if method == "kraus":
        ks = []
        for k in kraus_of_choi(ordered):
            t = k.reshape(dro, da, dri, da)
            ks.append(np.einsum("oaia->oi", t) / da)
        if not ks:
            ks = [np.zeros((dro, dri))]
        return choi_of_map(ks, ins_w, outs_w)
    if method != "sandwich":
        raise ValueError(f"unknown method {method!r}")
    # J[(i, a), (o, b)] rows/cols, reshaped to J[i, a, o, b ; j, a', o', b']
    jt = ordered.matrix.reshape(dri, da, dro, da, dri, da, dro, da)
    phi = max_entangled(da, normalized=True).reshape(da, da)
    choi = np.zeros((dri * dro, dri * dro), dtype=complex)
    for i in range(dri):
        for j in range(dri):
            x = np.zeros((dri, dri), dtype=complex)
            x[i, j] = 1.0
            # input sigma = X (x) |phi><phi| on (R_in, A_in, A')
            sigma = np.einsum("ij,ap,bq->iapjbq", x, phi, phi.conj())
            # (E (x) id_A')(sigma)[(o, b, p), (o', b', q)]
            out = np.einsum("iapjcq,iaobjcwe->obpweq", sigma, jt)
            val = np.einsum("bp,obpweq,eq->ow", phi.conj(), out, phi)
            choi[i * dro:(i + 1) * dro, j * dro:(j + 1) * dro] = val
    return ChoiOperator([System(l, d, Role.IN) for l, d in ins_w]
                        + [System(l, d, Role.OUT) for l, d in outs_w], choi)


def pctc_unitary_operator(u, dims: Sequence[int], ctc: Sequence[int]) -> np.ndarray:
    """Pure-level P-CTC operator: partial trace of ``u`` over the CTC factors,
    divided by the product of their dimensions."""
    u = np.asarray(u, dtype=complex)
    scale = float(np.prod([dims[k] for k in ctc])) if ctc else 1.0
    return partial_trace(u, dims, ctc) / scale


def pctc_map_probability(c: ChoiOperator, rho, povm: Sequence, tol: float = TP_TOL) -> list[float]:
    """Normalised outcome probabilities Tr[C(rho) M_a] / Tr[C(rho)]."""
    povm = [np.asarray(m, dtype=complex) for m in povm]
    if not povm:
        raise InvalidMeasurement("empty POVM")
    total = sum(povm)
    if np.linalg.norm(total - np.eye(total.shape[0])) > tol:
        raise InvalidMeasurement("POVM elements do not sum to the identity")
    sigma = apply_map(c, rho)
    denom = float(np.trace(sigma).real)
    if denom < POSTSELECTION_TOL:
        raise PostSelectionImpossible(f"Tr[C(rho)] = {denom!r}")
    return [float(np.trace(sigma @ m).real) / denom for m in povm]


@dataclass(eq=False)
class Comb:
    """Quantum comb: composite Choi operator plus its slot signature.

    ``slots[j]`` is ``(to_slot, from_slot)``: labels the comb outputs into
    slot j and labels it receives back from it.
    """

    choi: ChoiOperator
    past: tuple
    slots: tuple
    future: tuple
    teeth: tuple = ()
    memories: tuple = ()

    @property
    def n_slots(self) -> int:
        return len(self.slots)

    def system_sets(self) -> list[tuple[tuple, Role]]:
        """Systems S_0 ... S_{2N+1} as ``(labels, role)`` seen from the comb."""
        sets = [(tuple(self.past), Role.IN)]
        for to_slot, from_slot in self.slots:
            sets.append((tuple(to_slot), Role.OUT))
            sets.append((tuple(from_slot), Role.IN))
        sets.append((tuple(self.future), Role.OUT))
        return sets


def build_comb(teeth: Sequence[ChoiOperator], memories: Sequence[Optional[str]] = (),
               tol: float = TP_TOL) -> Comb:
    """Chain ``teeth`` through memory wires into a comb.

    ``memories[i]`` names the wire from tooth i to tooth i+1 (None for none).
    Every tooth must be trace preserving.
    """
    teeth = list(teeth)
    memories = list(memories) if memories else [None] * (len(teeth) - 1)
    if not teeth:
        raise BrokenMemoryChain("a comb needs at least one tooth")
    if len(memories) != len(teeth) - 1:
        raise BrokenMemoryChain(f"{len(teeth)} teeth need {len(teeth) - 1} memories")
    for k, t in enumerate(teeth):
        res = trace_preservation_residual(t)
        if res > tol:
            raise NotTracePreserving(f"tooth {k} violates trace preservation by {res:.3g}")
    for k, q in enumerate(memories):
        if q is None:
            continue
        try:
            d_out = teeth[k].systems[teeth[k].index(q, Role.OUT)].dim
            d_in = teeth[k + 1].systems[teeth[k + 1].index(q, Role.IN)].dim
        except KeyError as exc:
            raise BrokenMemoryChain(f"memory {q!r} does not join teeth {k} and {k + 1}") from exc
        if d_out != d_in:
            raise BrokenMemoryChain(f"memory {q!r} has dims {d_out} and {d_in}")
    choi = link_all(teeth)
    slots = []
    for k in range(len(teeth) - 1):
        to_slot = tuple(s.label for s in teeth[k].outputs if s.label != memories[k])
        prev_mem = memories[k]
        from_slot = tuple(s.label for s in teeth[k + 1].inputs if s.label != prev_mem)
        slots.append((to_slot, from_slot))
    past = tuple(s.label for s in teeth[0].inputs)
    future = tuple(s.label for s in teeth[-1].outputs)
    return Comb(choi, past, tuple(slots), future, tuple(teeth), tuple(memories))


def _check_times(time_labels, n_sets: int):
    if time_labels is None:
        return None
    tl = tuple(Fraction(t) for t in time_labels)
    if len(tl) != n_sets:
        raise MissingTimeLabels(f"expected {n_sets} time labels, got {len(tl)}")
    # an input set and the output set right after it may share a time
    for j, (a, b) in enumerate(zip(tl, tl[1:])):
        if b < a or (b == a and j % 2 == 1):
            raise MissingTimeLabels("time labels must increase along the comb")
    return tl


@dataclass(eq=False)
class PctcComb:
    """A comb some of whose global-future outputs loop back to global-past inputs.

    ``choi`` is the operator after the loops are closed; ``base`` keeps the
    open comb when it is known.
    """

    choi: ChoiOperator
    past: tuple
    slots: tuple
    future: tuple
    ctc_pairs: tuple = ()
    time_labels: Optional[tuple] = None
    base: Optional[Comb] = None
    ctc_dims: tuple = ()
    system_names: Optional[dict] = None

    def __post_init__(self):
        self.time_labels = _check_times(self.time_labels, 2 * len(self.slots) + 2)

    @property
    def n_slots(self) -> int:
        return len(self.slots)

    def system_sets(self) -> list[tuple[tuple, Role]]:
        return Comb(self.choi, self.past, self.slots, self.future).system_sets()


def pctc_assist_comb(c: Comb, ctc_pairs: Sequence[tuple], time_labels=None) -> PctcComb:
    """Close ``(output, input)`` pairs of ``c`` with P-CTCs."""
    pairs = tuple((str(o), str(i)) for o, i in ctc_pairs)
    choi = c.choi
    dims = []
    for o, i in pairs:
        if o not in c.future:
            raise SlotMismatch(f"CTC source {o!r} is not a global-future output")
        if i not in c.past:
            raise SlotMismatch(f"CTC target {i!r} is not a global-past input")
        do = choi.systems[choi.index(o, Role.OUT)].dim
        di = choi.systems[choi.index(i, Role.IN)].dim
        if do != di:
            raise DimensionMismatch(f"CTC {o}->{i} joins dims {do} and {di}")
        dims.append(do)
        choi = close_ctc(choi, o, i)
    past = tuple(l for l in c.past if l not in {i for _, i in pairs})
    future = tuple(l for l in c.future if l not in {o for o, _ in pairs})
    return PctcComb(choi, past, c.slots, future, pairs, time_labels, c, tuple(dims))


@dataclass(frozen=True)
class CombInstrument:
    """Instrument plugged into one slot: ``(outcome, ChoiOperator)`` pairs."""

    outcomes: tuple

    def __post_init__(self):
        object.__setattr__(self, "outcomes", tuple((lab, m) for lab, m in self.outcomes))
        if not self.outcomes:
            raise InvalidMeasurement("an instrument needs at least one outcome")


def trivial_instrument() -> CombInstrument:
    return CombInstrument((("0", ChoiOperator([], np.ones((1, 1)))),))


def _check_instrument(inst: CombInstrument, to_slot, from_slot, choi: ChoiOperator, k: int):
    dims = {s.label: s.dim for s in choi.systems}
    want = {(l, Role.IN) for l in to_slot} | {(l, Role.OUT) for l in from_slot}
    total = None
    for lab, m in inst.outcomes:
        got = {s.key for s in m.systems}
        if got != want:
            raise SlotMismatch(f"slot {k}: outcome {lab!r} acts on {sorted((a, b.value) for a, b in got)}")
        for s in m.systems:
            if dims.get(s.label, s.dim) != s.dim:
                raise SlotMismatch(f"slot {k}: system {s.label!r} has dim {s.dim}")
        mm = m.permuted(sorted(want, key=lambda x: (x[1].value, x[0])))
        total = mm.matrix if total is None else total + mm.matrix
    probe = ChoiOperator(mm.systems, total)
    res = trace_preservation_residual(probe)
    if res > TP_TOL:
        raise InvalidMeasurement(f"slot {k}: instrument is not trace preserving ({res:.3g})")


@dataclass
class ProbabilityTable:
    probs: dict
    denominator: float
    numerators: dict = field(default_factory=dict)


def comb_probability(c, rho0, instruments: Sequence[CombInstrument]) -> ProbabilityTable:
    """Outcome statistics of a (P-CTC) comb with product instruments in its slots.

    Args:
        c: a :class:`Comb` or :class:`PctcComb`.
        rho0: state on the global past (in ``c.past`` order), or None when
            the past is trivial.
        instruments: one instrument per slot.
    """
    if len(instruments) != len(c.slots):
        raise SlotMismatch(f"{len(instruments)} instruments for {len(c.slots)} slots")
    choi = c.choi
    for k, (inst, (to_slot, from_slot)) in enumerate(zip(instruments, c.slots)):
        _check_instrument(inst, to_slot, from_slot, choi, k)
    past = [(l, choi.systems[choi.index(l, Role.IN)].dim) for l in c.past]
    future = [(l, choi.systems[choi.index(l, Role.OUT)].dim) for l in c.future]
    if rho0 is None:
        if past and int(np.prod([d for _, d in past])) != 1:
            raise SlotMismatch("an initial state is required for a non-trivial past")
        rho0 = np.ones((1, 1))
    w = link(link(choi, state_choi(rho0, past)), trace_choi(future))

    numerators = {}

    def walk(op, k, prefix):
        if k == len(instruments):
            numerators[prefix] = op.scalar().real
            return
        for lab, m in instruments[k].outcomes:
            walk(link(op, m), k + 1, prefix + (lab,))

    walk(w, 0, ())
    denom = float(sum(numerators.values()))
    if denom <= POSTSELECTION_TOL:
        raise PostSelectionImpossible(f"denominator {denom!r} is not positive")
    probs = {k: v / denom for k, v in numerators.items()}
    return ProbabilityTable(probs, denom, numerators)


def absorb_plugged_pctcs(outer: PctcComb, plugged: PctcComb) -> tuple[PctcComb, list]:
    """Rewrite ``outer`` composed with ``plugged`` as a bigger P-CTC comb
    composed with a memoryless product of the plugged teeth.

    Plugged memory wires are carried forward by identity wires added to the
    outer teeth; plugged CTCs become CTCs of the returned comb.

    Returns:
        ``(new_comb, product_teeth)``; linking ``new_comb.choi`` with all
        ``product_teeth`` reproduces ``link(outer.choi, plugged.choi)``.
    """
    if outer.base is None or not outer.base.teeth:
        raise SlotMismatch("outer comb must carry its teeth")
    if plugged.base is None or not plugged.base.teeth:
        raise SlotMismatch("plugged comb must carry its teeth")
    o_teeth = list(outer.base.teeth)
    f_teeth = list(plugged.base.teeth)
    n = len(outer.slots)
    if len(f_teeth) != n:
        raise SlotMismatch(f"plugged comb has {len(f_teeth)} teeth for {n} slots")
    f_mem = list(plugged.base.memories)
    used = {s.label for t in o_teeth + f_teeth for s in t.systems}

    def fresh(base: str) -> str:
        lab = base
        k = 0
        while lab in used:
            k += 1
            lab = f"{base}~{k}"
        used.add(lab)
        return lab

    new_f = list(f_teeth)
    for k, r in enumerate(f_mem):
        if r is None:
            continue
        d = f_teeth[k].systems[f_teeth[k].index(r, Role.OUT)].dim
        r_fwd = fresh(r + "'")
        o_teeth[k + 1] = link(o_teeth[k + 1], identity_choi(r, r_fwd, d))
        new_f[k + 1] = new_f[k + 1].relabel({(r, Role.IN): r_fwd})
    new_pairs = list(outer.ctc_pairs)
    for a_out, a_in in plugged.ctc_pairs:
        d = f_teeth[-1].systems[f_teeth[-1].index(a_out, Role.OUT)].dim
        src = fresh(a_in + "<")
        dst = fresh(a_out + ">")
        o_teeth[0] = link(o_teeth[0], identity_choi(src, a_in, d))
        o_teeth[-1] = link(o_teeth[-1], identity_choi(a_out, dst, d))
        new_pairs.append((dst, src))
    base = build_comb(o_teeth, outer.base.memories)
    combined = pctc_assist_comb(base, new_pairs)
    return combined, new_f
