"""JSON documents for multiple-time states, circuits and instruments.

Complex numbers are written as ``[re, im]`` and rationals as ``[num, den]``.
Every document carries a ``kind`` field. :func:`dumps` is canonical: writing
a parsed canonical document reproduces it byte for byte.
"""

from __future__ import annotations

import json
from fractions import Fraction
from typing import Any

import numpy as np

from .circuit import CircuitSpec, Node, Wire
from .errors import MtsCtcError, ParseError
from .mts import Direction, MtDensityVector, MtInstrument, MtVector, SpaceLabel
from .pctc import CombInstrument, choi_of_map, kraus_of_choi

FORMAT = "mtsctc"
VERSION = 1


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=True, allow_nan=False) + "\n"


def loads(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ParseError("document must be an object with a 'kind' field")
    if doc.get("format", FORMAT) != FORMAT:
        raise ParseError(f"unknown format {doc.get('format')!r}")
    return doc


def read(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return loads(fh.read())
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc


def write(path: str, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(doc))


def enc_complex(z) -> list:
    z = complex(z)
    return [float(z.real) + 0.0, float(z.imag) + 0.0]


def enc_array(a) -> Any:
    a = np.asarray(a, dtype=complex)
    # + 0.0 folds negative zeros so canonical output is stable
    return (np.stack([a.real, a.imag], axis=-1) + 0.0).tolist()


def dec_array(x, ndim: int = None) -> np.ndarray:
    try:
        arr = np.asarray(x, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"malformed numeric array: {exc}") from exc
    if arr.ndim == 0 or arr.shape[-1] != 2:
        raise ParseError("complex entries must be [re, im] pairs")
    out = arr[..., 0] + 1j * arr[..., 1]
    if ndim is not None and out.ndim != ndim:
        raise ParseError(f"expected a {ndim}-d array, got {out.ndim}-d")
    return out


def enc_fraction(t) -> list:
    t = Fraction(t)
    return [t.numerator, t.denominator]


def dec_fraction(x) -> Fraction:
    if isinstance(x, list) and len(x) == 2 and all(isinstance(v, int) for v in x) and x[1] != 0:
        return Fraction(x[0], x[1])
    if isinstance(x, int):
        return Fraction(x)
    raise ParseError(f"rational must be [num, den], got {x!r}")


def _header(kind: str) -> dict:
    return {"format": FORMAT, "version": VERSION, "kind": kind}


def _enc_factor(lab: SpaceLabel, dim: int) -> dict:
    out = {"system": lab.system, "time": enc_fraction(lab.time),
           "direction": lab.direction.value, "dim": dim}
    if lab.daggered:
        out["daggered"] = True
    return out


def _dec_factor(f: dict):
    try:
        lab = SpaceLabel(str(f["system"]), dec_fraction(f["time"]), Direction(f["direction"]),
                         bool(f.get("daggered", False)))
        return lab, int(f["dim"])
    except (KeyError, ValueError, TypeError) as exc:
        raise ParseError(f"malformed factor {f!r}: {exc}") from exc


def mts_doc(eta: MtDensityVector) -> dict:
    doc = _header("mts")
    doc["factors"] = [_enc_factor(l, d) for l, d in eta.space.factors]
    doc["operator"] = enc_array(eta.op)
    return doc


def mts_from_doc(doc: dict) -> MtDensityVector:
    _expect(doc, "mts")
    factors = [_dec_factor(f) for f in doc.get("factors", [])]
    try:
        if "vector" in doc:
            return MtVector.from_factors(factors, dec_array(doc["vector"], 1)).density()
        return MtDensityVector.from_factors(factors, dec_array(doc["operator"], 2))
    except KeyError as exc:
        raise ParseError("an mts document needs 'operator' or 'vector'") from exc
    except MtsCtcError as exc:
        raise ParseError(str(exc)) from exc


def circuit_doc(c: CircuitSpec) -> dict:
    doc = _header("circuit")
    wires = []
    for w in c.wires:
        e = {"label": w.label, "dim": w.dim}
        if w.time is not None:
            e["time"] = enc_fraction(w.time)
        if w.system is not None:
            e["system"] = w.system
        wires.append(e)
    nodes = []
    for n in c.nodes:
        e = {"kind": n.kind, "inputs": list(n.inputs), "outputs": list(n.outputs)}
        if n.ops:
            e["ops"] = [enc_array(o) for o in n.ops]
        if n.weights:
            e["weights"] = list(n.weights)
        if n.name:
            e["name"] = n.name
        nodes.append(e)
    doc["wires"] = wires
    doc["nodes"] = nodes
    doc["ctc_pairs"] = [list(p) for p in c.ctc_pairs]
    doc["metadata"] = c.metadata
    return doc


def circuit_from_doc(doc: dict) -> CircuitSpec:
    _expect(doc, "circuit")
    try:
        wires = [Wire(str(w["label"]), int(w["dim"]),
                      dec_fraction(w["time"]) if "time" in w else None, w.get("system"))
                 for w in doc["wires"]]
        nodes = []
        for n in doc["nodes"]:
            ops = [dec_array(o) for o in n.get("ops", [])]
            nodes.append(Node(n["kind"], tuple(n.get("inputs", [])), tuple(n.get("outputs", [])),
                              tuple(ops), tuple(n.get("weights", [])), n.get("name", "")))
        pairs = [tuple(p) for p in doc.get("ctc_pairs", [])]
        return CircuitSpec(tuple(wires), tuple(nodes), tuple(pairs), dict(doc.get("metadata", {})))
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed circuit document: {exc!r}") from exc
    except MtsCtcError as exc:
        raise ParseError(str(exc)) from exc


def mt_instrument_doc(inst: MtInstrument) -> dict:
    doc = _header("instrument")
    doc["outcomes"] = [{"label": str(lab), "factors": [_enc_factor(l, d) for l, d in j.space.factors],
                        "operator": enc_array(j.op)} for lab, j in inst.outcomes]
    return doc


def comb_instruments_doc(rho0, instruments) -> dict:
    doc = _header("instrument")
    doc["initial_state"] = None if rho0 is None else enc_array(rho0)
    slots = []
    for inst in instruments:
        outs = []
        for lab, m in inst.outcomes:
            outs.append({
                "label": str(lab),
                "inputs": [[s.label, s.dim] for s in m.inputs],
                "outputs": [[s.label, s.dim] for s in m.outputs],
                "kraus": [enc_array(k) for k in kraus_of_choi(m)],
            })
        slots.append({"outcomes": outs})
    doc["slots"] = slots
    return doc


def instrument_from_doc(doc: dict):
    """Either an :class:`MtInstrument` or ``(rho0, [CombInstrument, ...])``."""
    _expect(doc, "instrument")
    try:
        if "outcomes" in doc:
            outs = []
            for o in doc["outcomes"]:
                factors = [_dec_factor(f) for f in o["factors"]]
                outs.append((str(o["label"]), MtDensityVector.from_factors(factors, dec_array(o["operator"], 2))))
            return MtInstrument(tuple(outs))
        rho0 = doc.get("initial_state")
        rho0 = None if rho0 is None else dec_array(rho0, 2)
        insts = []
        for slot in doc["slots"]:
            outs = []
            for o in slot["outcomes"]:
                ins = [(str(l), int(d)) for l, d in o.get("inputs", [])]
                outp = [(str(l), int(d)) for l, d in o.get("outputs", [])]
                ks = [dec_array(k, 2) for k in o["kraus"]]
                outs.append((str(o["label"]), choi_of_map(ks, ins, outp)))
            insts.append(CombInstrument(tuple(outs)))
        return rho0, insts
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed instrument document: {exc!r}") from exc


def _expect(doc: dict, kind: str) -> None:
    if doc.get("kind") != kind:
        raise ParseError(f"expected a {kind!r} document, got {doc.get('kind')!r}")
