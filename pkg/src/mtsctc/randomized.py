"""Seeded random instances used by the self-test and the test-suite."""

from __future__ import annotations

from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .pctc import ChoiOperator, CombInstrument, Comb, PctcComb, build_comb, choi_of_map, pctc_assist_comb


def ginibre(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    return rng.normal(size=(rows, cols)) + 1j * rng.normal(size=(rows, cols))


def unitary(rng: np.random.Generator, d: int) -> np.ndarray:
    """Haar unitary from the QR decomposition of a Ginibre matrix."""
    q, r = np.linalg.qr(ginibre(rng, d, d))
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def ket(rng: np.random.Generator, d: int) -> np.ndarray:
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def density(rng: np.random.Generator, d: int, rank: Optional[int] = None) -> np.ndarray:
    g = ginibre(rng, d, rank or d)
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def channel_kraus(rng: np.random.Generator, din: int, dout: int, n: int = 2) -> list[np.ndarray]:
    """Kraus operators of a random trace-preserving map (Stinespring isometry)."""
    v = unitary(rng, max(din, dout * n))[:, :din][: dout * n]
    if dout * n < din:
        raise ValueError("not enough Kraus operators for an isometry")
    return [v[k * dout:(k + 1) * dout] for k in range(n)]


def cp_kraus(rng: np.random.Generator, din: int, dout: int, n: int = 2) -> list[np.ndarray]:
    return [ginibre(rng, dout, din) / np.sqrt(din) for _ in range(n)]


def channel(rng, inputs, outputs, n: int = 2) -> ChoiOperator:
    din = int(np.prod([d for _, d in inputs])) if inputs else 1
    dout = int(np.prod([d for _, d in outputs])) if outputs else 1
    n = max(n, -(-din // dout))
    return choi_of_map(channel_kraus(rng, din, dout, n), inputs, outputs)


def povm(rng: np.random.Generator, d: int, n: int = 2) -> list[np.ndarray]:
    """Random n-outcome POVM via a square-root normalisation."""
    raw = [g @ g.conj().T for g in (ginibre(rng, d, d) for _ in range(n))]
    s = sum(raw)
    w, v = np.linalg.eigh(s)
    inv = v @ np.diag(w ** -0.5) @ v.conj().T
    return [inv @ m @ inv for m in raw]


def instrument(rng, to_slot: Sequence, from_slot: Sequence, n: int = 2) -> CombInstrument:
    """Random n-outcome instrument from ``to_slot`` wires to ``from_slot`` wires."""
    din = int(np.prod([d for _, d in to_slot])) if to_slot else 1
    dout = int(np.prod([d for _, d in from_slot])) if from_slot else 1
    ks = channel_kraus(rng, din, dout, max(n, -(-din // dout)))
    groups = [ks[k::n] for k in range(n)]
    return CombInstrument(tuple((str(k), choi_of_map(g, to_slot, from_slot))
                                for k, g in enumerate(groups) if g))


def comb(rng: np.random.Generator, n_slots: int, dim: int = 2, memory: int = 2,
         n_ctc: int = 0, prefix: str = "S") -> PctcComb:
    """Random time-labelled comb with one wire per system set.

    Tooth i maps S_{2i} (and memory) to S_{2i+1} (and memory). CTC wires are
    extra outputs of the last tooth fed back into the first tooth.
    """
    teeth = []
    memories = []
    ctc = [(f"X{k}'", f"X{k}") for k in range(n_ctc)]
    for i in range(n_slots + 1):
        ins = [(f"{prefix}{2 * i}", dim)]
        outs = [(f"{prefix}{2 * i + 1}", dim)]
        if i > 0 and memory > 1:
            ins.append((f"Q{i - 1}", memory))
        if i < n_slots and memory > 1:
            outs.append((f"Q{i}", memory))
        if i == 0:
            ins += [(x, dim) for _, x in ctc]
        if i == n_slots:
            outs += [(x, dim) for x, _ in ctc]
        teeth.append(channel(rng, ins, outs, 2))
        if i < n_slots:
            memories.append(f"Q{i}" if memory > 1 else None)
    base = build_comb(teeth, memories)
    times = [Fraction(j) for j in range(2 * n_slots + 2)]
    return pctc_assist_comb(base, ctc, times)


def comb_instruments(rng, c, n: int = 2) -> list[CombInstrument]:
    """One random instrument per slot of ``c``."""
    dims = {s.label: s.dim for s in c.choi.systems}
    out = []
    for to_slot, from_slot in c.slots:
        out.append(instrument(rng, [(l, dims[l]) for l in to_slot],
                              [(l, dims[l]) for l in from_slot], n))
    return out


def past_state(rng, c) -> Optional[np.ndarray]:
    dims = {s.label: s.dim for s in c.choi.systems}
    d = int(np.prod([dims[l] for l in c.past])) if c.past else 1
    return density(rng, d)
