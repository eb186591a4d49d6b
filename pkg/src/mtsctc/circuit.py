"""Wire/node circuit descriptions and their evaluation.

Each wire is a labelled edge that is produced by at most one node and consumed
by at most one node. Wires nobody produces are global inputs; wires nobody
consumes are global outputs. A CTC pair ``(out, in)`` joins a global output
back to a global input.

Node kinds:

``gate``        one unitary, ``ops[0]`` has shape (prod out, prod in)
``kraus``       a CP map given by Kraus operators
``mixture``     unitaries ``ops`` applied with probabilities ``weights``
``prep``        no inputs; ``ops[0]`` is a ket or a density matrix
``postselect``  no outputs; ``ops[0]`` holds the coefficients of a bra
``discard``     no outputs; traces its inputs
``wire``        identity from inputs to outputs (dims must agree pairwise)
``slot``        marks an open slot; its inputs/outputs stay open
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidCircuit, MissingTimeLabels
from .linalg import is_unitary
from .pctc import (
    ChoiOperator,
    PctcComb,
    Role,
    System,
    choi_of_map,
    close_ctc,
    identity_choi,
    link_all,
    state_choi,
    trace_choi,
)

NODE_KINDS = ("gate", "kraus", "mixture", "prep", "postselect", "discard", "wire", "slot")


@dataclass(frozen=True)
class Wire:
    label: str
    dim: int
    time: Optional[Fraction] = None
    system: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "dim", int(self.dim))
        if self.time is not None:
            if isinstance(self.time, float):
                raise InvalidCircuit("wire times must be exact rationals")
            object.__setattr__(self, "time", Fraction(self.time))
        if self.dim < 1:
            raise InvalidCircuit(f"wire {self.label!r} has dimension {self.dim}")

    @property
    def system_name(self) -> str:
        return self.system if self.system is not None else self.label


@dataclass(frozen=True, eq=False)
class Node:
    kind: str
    inputs: tuple = ()
    outputs: tuple = ()
    ops: tuple = ()
    weights: tuple = ()
    name: str = ""

    def __post_init__(self):
        if self.kind not in NODE_KINDS:
            raise InvalidCircuit(f"unknown node kind {self.kind!r}")
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        object.__setattr__(self, "ops", tuple(np.asarray(o, dtype=complex) for o in self.ops))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))


@dataclass(eq=False)
class CircuitSpec:
    wires: tuple
    nodes: tuple
    ctc_pairs: tuple = ()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.wires = tuple(self.wires)
        self.nodes = tuple(self.nodes)
        self.ctc_pairs = tuple((str(o), str(i)) for o, i in self.ctc_pairs)
        validate(self)

    @property
    def wire_map(self) -> dict:
        return {w.label: w for w in self.wires}

    def producers(self) -> dict:
        return {w: n for n in self.nodes if n.kind != "slot" for w in n.outputs}

    def consumers(self) -> dict:
        return {w: n for n in self.nodes if n.kind != "slot" for w in n.inputs}

    def open_inputs(self) -> list[str]:
        prod, cons = self.producers(), self.consumers()
        return [w.label for w in self.wires if w.label not in prod and w.label in cons]

    def open_outputs(self) -> list[str]:
        prod, cons = self.producers(), self.consumers()
        return [w.label for w in self.wires if w.label in prod and w.label not in cons]

    def boundary(self) -> tuple[list[str], list[str]]:
        """Open inputs and outputs that are not part of a CTC."""
        ctc_out = {o for o, _ in self.ctc_pairs}
        ctc_in = {i for _, i in self.ctc_pairs}
        ins = [w for w in self.open_inputs() if w not in ctc_in]
        outs = [w for w in self.open_outputs() if w not in ctc_out]
        return ins, outs

    @property
    def ctc_dims(self) -> list[int]:
        wm = self.wire_map
        return [wm[o].dim for o, _ in self.ctc_pairs]

    def is_pure(self) -> bool:
        for n in self.nodes:
            if n.kind in ("mixture", "discard"):
                return False
            if n.kind == "kraus" and len(n.ops) != 1:
                return False
            if n.kind == "prep" and n.ops[0].ndim != 1:
                return False
        return True


def _prod(dims) -> int:
    return int(np.prod(list(dims))) if len(dims) else 1


def validate(c: CircuitSpec) -> None:
    wm = {}
    for w in c.wires:
        if w.label in wm:
            raise InvalidCircuit(f"wire {w.label!r} declared twice")
        wm[w.label] = w
    produced, consumed = set(), set()
    for n in c.nodes:
        for w in n.inputs + n.outputs:
            if w not in wm:
                raise InvalidCircuit(f"node {n.name or n.kind} uses undeclared wire {w!r}")
        if n.kind == "slot":
            continue
        for w in n.outputs:
            if w in produced:
                raise InvalidCircuit(f"wire {w!r} produced twice")
            produced.add(w)
        for w in n.inputs:
            if w in consumed:
                raise InvalidCircuit(f"wire {w!r} consumed twice")
            consumed.add(w)
        _validate_node(n, wm)
    for w in wm:
        if w not in produced and w not in consumed:
            raise InvalidCircuit(f"wire {w!r} is not attached to any node")
    open_in = [w for w in wm if w not in produced]
    open_out = [w for w in wm if w not in consumed]
    seen = set()
    for o, i in c.ctc_pairs:
        if o not in open_out or o in seen:
            raise InvalidCircuit(f"CTC source {o!r} must be a free global output")
        if i not in open_in or i in seen:
            raise InvalidCircuit(f"CTC target {i!r} must be a free global input")
        seen.update((o, i))
        if wm[o].dim != wm[i].dim:
            raise DimensionMismatch(f"CTC {o}->{i} joins dims {wm[o].dim} and {wm[i].dim}")


def _validate_node(n: Node, wm: dict) -> None:
    din = _prod([wm[w].dim for w in n.inputs])
    dout = _prod([wm[w].dim for w in n.outputs])
    label = n.name or n.kind
    if n.kind in ("gate", "kraus", "mixture"):
        if not n.ops:
            raise InvalidCircuit(f"{label}: no operators")
        for op in n.ops:
            if op.shape != (dout, din):
                raise InvalidCircuit(f"{label}: operator shape {op.shape}, expected {(dout, din)}")
        if n.kind in ("gate", "mixture"):
            for op in n.ops:
                if not is_unitary(op, 1e-8):
                    raise InvalidCircuit(f"{label}: operator is not unitary")
        if n.kind == "mixture":
            if len(n.weights) != len(n.ops) or any(w < 0 for w in n.weights):
                raise InvalidCircuit(f"{label}: need one non-negative weight per unitary")
            if abs(sum(n.weights) - 1.0) > 1e-10:
                raise InvalidCircuit(f"{label}: weights sum to {sum(n.weights)!r}")
    elif n.kind == "prep":
        if n.inputs or len(n.ops) != 1:
            raise InvalidCircuit(f"{label}: a preparation has no inputs and one state")
        s = n.ops[0]
        if s.shape not in ((dout,), (dout, dout)):
            raise InvalidCircuit(f"{label}: state shape {s.shape} for dimension {dout}")
    elif n.kind == "postselect":
        if n.outputs or len(n.ops) != 1 or n.ops[0].shape != (din,):
            raise InvalidCircuit(f"{label}: a post-selection has no outputs and one bra of size {din}")
    elif n.kind == "discard":
        if n.outputs or n.ops:
            raise InvalidCircuit(f"{label}: a discard has no outputs or operators")
    elif n.kind == "wire":
        if len(n.inputs) != len(n.outputs) or n.ops:
            raise InvalidCircuit(f"{label}: an identity wire maps inputs to outputs one to one")
        for a, b in zip(n.inputs, n.outputs):
            if wm[a].dim != wm[b].dim:
                raise InvalidCircuit(f"{label}: {a!r} and {b!r} differ in dimension")


def _branches(n: Node, wm: dict) -> list[np.ndarray]:
    """Amplitude tensors whose outer-product sum gives the node's CP map."""
    din = [wm[w].dim for w in n.inputs]
    dout = [wm[w].dim for w in n.outputs]
    if n.kind in ("gate", "kraus"):
        return [op.reshape(dout + din) for op in n.ops]
    if n.kind == "mixture":
        return [np.sqrt(p) * op.reshape(dout + din) for p, op in zip(n.weights, n.ops) if p > 0]
    if n.kind == "prep":
        s = n.ops[0]
        if s.ndim == 1:
            return [s.reshape(dout)]
        w, v = np.linalg.eigh(0.5 * (s + s.conj().T))
        return [np.sqrt(w[k]) * v[:, k].reshape(dout) for k in range(len(w)) if w[k] > 1e-14]
    if n.kind == "postselect":
        return [n.ops[0].reshape(din)]
    if n.kind == "discard":
        d = _prod(din)
        return [np.eye(d)[k].reshape(din) for k in range(d)]
    if n.kind == "wire":
        t = np.eye(_prod(din)).reshape(dout + din)
        return [t]
    raise InvalidCircuit(f"cannot evaluate node kind {n.kind!r}")


def _network(c: CircuitSpec):
    wm = c.wire_map
    ids = {w.label: k for k, w in enumerate(c.wires)}
    for o, i in c.ctc_pairs:
        ids[i] = ids[o]
    compact = {v: k for k, v in enumerate(sorted(set(ids.values())))}
    ids = {w: compact[v] for w, v in ids.items()}
    if len(compact) > 52:
        raise InvalidCircuit("circuit too large for dense evaluation")
    nodes = [n for n in c.nodes if n.kind != "slot"]
    subs = [[ids[w] for w in n.outputs] + [ids[w] for w in n.inputs] for n in nodes]
    ins, outs = c.boundary()
    out_sub = [ids[w] for w in outs] + [ids[w] for w in ins]
    scale = 1.0
    for o, _ in c.ctc_pairs:
        scale /= wm[o].dim
    dims_in = _prod([wm[w].dim for w in ins])
    dims_out = _prod([wm[w].dim for w in outs])
    return nodes, subs, out_sub, scale, (dims_out, dims_in), ins, outs


def _contract(tensors, subs, out_sub, shape, scale) -> np.ndarray:
    args = []
    for t, s in zip(tensors, subs):
        args += [t, s]
    if not args:
        return np.full(shape, scale, dtype=complex)
    res = np.einsum(*args, out_sub, optimize="greedy")
    return scale * np.asarray(res).reshape(shape)


def pure_operator(c: CircuitSpec) -> tuple[np.ndarray, list[str], list[str]]:
    """Operator from open inputs to open outputs with every CTC closed.

    Each CTC contributes a partial trace over its wire divided by its
    dimension. Only pure nodes are accepted.

    Returns:
        ``(K, input_labels, output_labels)`` with K of shape (out, in).
    """
    if not c.is_pure():
        raise InvalidCircuit("circuit contains mixed nodes; use choi()")
    wm = c.wire_map
    nodes, subs, out_sub, scale, shape, ins, outs = _network(c)
    tensors = [_branches(n, wm)[0] for n in nodes]
    return _contract(tensors, subs, out_sub, shape, scale), ins, outs


def _vec(k: np.ndarray) -> np.ndarray:
    return k.T.reshape(-1)


def choi(c: CircuitSpec, route: str = "branches") -> ChoiOperator:
    """Choi operator of the circuit after closing its CTCs.

    ``route="branches"`` sums pure contractions over every Kraus branch;
    ``route="link"`` builds one Choi operator per node and chains link
    products, closing the CTCs at the end. The two are independent and
    must agree.
    """
    wm = c.wire_map
    ins, outs = c.boundary()
    systems = [System(w, wm[w].dim, Role.IN) for w in ins] + [System(w, wm[w].dim, Role.OUT) for w in outs]
    if route == "link":
        return _choi_link(c).permuted([s.key for s in systems])
    if route != "branches":
        raise ValueError(f"unknown route {route!r}")
    nodes, subs, out_sub, scale, shape, _, _ = _network(c)
    options = [_branches(n, wm) for n in nodes]
    n_tot = shape[0] * shape[1]
    acc = np.zeros((n_tot, n_tot), dtype=complex)
    for combo in itertools.product(*options):
        v = _vec(_contract(list(combo), subs, out_sub, shape, scale))
        acc += np.outer(v, v.conj())
    return ChoiOperator(systems, acc)


def _node_choi(n: Node, wm: dict) -> ChoiOperator:
    ins = [(w, wm[w].dim) for w in n.inputs]
    outs = [(w, wm[w].dim) for w in n.outputs]
    if n.kind in ("gate", "kraus"):
        return choi_of_map(n.ops, ins, outs)
    if n.kind == "mixture":
        return choi_of_map([np.sqrt(p) * u for p, u in zip(n.weights, n.ops)], ins, outs)
    if n.kind == "prep":
        s = n.ops[0]
        rho = np.outer(s, s.conj()) if s.ndim == 1 else s
        return state_choi(rho, outs)
    if n.kind == "postselect":
        return choi_of_map([n.ops[0].reshape(1, -1)], ins, [])
    if n.kind == "discard":
        return trace_choi(ins)
    if n.kind == "wire":
        return link_all([identity_choi(a, b, wm[a].dim) for a, b in zip(n.inputs, n.outputs)])
    raise InvalidCircuit(f"cannot evaluate node kind {n.kind!r}")


def _choi_link(c: CircuitSpec) -> ChoiOperator:
    wm = c.wire_map
    total = link_all([_node_choi(n, wm) for n in c.nodes if n.kind != "slot"])
    for o, i in c.ctc_pairs:
        total = close_ctc(total, o, i)
    return total


def expand_mixtures(c: CircuitSpec) -> CircuitSpec:
    """Replace every mixture node by its control-ancilla form.

    The ancilla is prepared in diag(weights), controls which unitary acts,
    and is discarded afterwards.
    """
    wires = list(c.wires)
    nodes = []
    taken = {w.label for w in wires}
    for k, n in enumerate(c.nodes):
        if n.kind != "mixture":
            nodes.append(n)
            continue
        r = len(n.ops)
        a_in, a_out = f"ctl{k}", f"ctl{k}'"
        while a_in in taken or a_out in taken:
            a_in, a_out = a_in + "_", a_out + "_"
        taken.update((a_in, a_out))
        wires += [Wire(a_in, r), Wire(a_out, r)]
        d = n.ops[0].shape[0]
        ctrl = np.zeros((r * d, r * d), dtype=complex)
        for j, u in enumerate(n.ops):
            ctrl[j * d:(j + 1) * d, j * d:(j + 1) * d] = u
        nodes.append(Node("prep", (), (a_in,), (np.diag(n.weights).astype(complex),), name=f"{n.name}:ancilla"))
        nodes.append(Node("gate", (a_in,) + n.inputs, (a_out,) + n.outputs, (ctrl,), name=f"{n.name}:controlled"))
        nodes.append(Node("discard", (a_out,), (), name=f"{n.name}:trace"))
    return CircuitSpec(tuple(wires), tuple(nodes), c.ctc_pairs, dict(c.metadata))


def comb_sets(labels_times: Sequence[tuple]) -> tuple[list, list]:
    """Group ``(label, time, role)`` boundary wires into alternating sets.

    Inputs at a time come before outputs at the same time. Empty sets are
    inserted where two consecutive groups share a role.

    Returns:
        ``(sets, times)`` where ``sets[j]`` is a tuple of labels and
        ``times[j]`` its time tag.
    """
    groups = {}
    for lab, t, role in labels_times:
        if t is None:
            raise MissingTimeLabels(f"wire {lab!r} has no time label")
        key = (Fraction(t), 0 if Role(role) is Role.IN else 1)
        groups.setdefault(key, []).append(lab)
    ordered = sorted(groups.items())
    sets, times = [], []
    expect = 0
    for (t, role), labs in ordered:
        if role != expect:
            prev = times[-1] if times else None
            times.append(t - 1 if prev is None else (prev + t) / 2)
            sets.append(())
            expect ^= 1
        sets.append(tuple(labs))
        times.append(t)
        expect ^= 1
    if expect == 1:
        times.append((times[-1] + 1) if times else Fraction(1))
        sets.append(())
    if not sets:
        sets, times = [(), ()], [Fraction(0), Fraction(1)]
    return sets, times


def circuit_comb(c: CircuitSpec, route: str = "branches") -> PctcComb:
    """Evaluate a time-labelled circuit into a P-CTC comb (loops closed)."""
    wm = c.wire_map
    ins, outs = c.boundary()
    entries = [(w, wm[w].time, Role.IN) for w in ins] + [(w, wm[w].time, Role.OUT) for w in outs]
    sets, times = comb_sets(entries)
    op = choi(c, route)
    slots = tuple((sets[2 * k + 1], sets[2 * k + 2]) for k in range((len(sets) - 2) // 2))
    return PctcComb(op, sets[0], slots, sets[-1], c.ctc_pairs, tuple(times), None,
                    tuple(c.ctc_dims), {w.label: w.system_name for w in c.wires})

