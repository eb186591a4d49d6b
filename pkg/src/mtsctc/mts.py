"""Multiple-time states: labelled spaces, vectors, density vectors, composition.

A factor is a Hilbert space tagged with a system name, a rational time and a
direction. Forward factors hold kets, backward factors hold bras. Coefficients
of a bra <phi| are stored as the conjugated amplitudes of |phi>, so that
composition is a plain contraction of coefficient tensors with no conjugation.

Density vectors store only the non-daggered layer as a dense operator
``op[i, j]``; the daggered twin of each factor is implicit in the column index.
"""

from __future__ import annotations

import enum
import string
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import (
    DimensionMismatch,
    FreeOperationViolation,
    NotComposable,
    NotPositive,
    PostSelectionImpossible,
    SpaceMismatch,
)
from .linalg import proportionality

POSITIVITY_TOL = 1e-9
POSTSELECTION_TOL = 1e-12

TimeLike = Union[Fraction, int, str]


class Direction(enum.Enum):
    FORWARD = "forward"
    BACKWARD = "backward"

    def flipped(self) -> "Direction":
        return Direction.BACKWARD if self is Direction.FORWARD else Direction.FORWARD


def _time(t: TimeLike) -> Fraction:
    if isinstance(t, float):
        raise TypeError("time labels must be exact rationals, not floats")
    return Fraction(t)


@dataclass(frozen=True)
class SpaceLabel:
    system: str
    time: Fraction
    direction: Direction
    daggered: bool = False

    def __post_init__(self):
        object.__setattr__(self, "time", _time(self.time))
        object.__setattr__(self, "direction", Direction(self.direction))

    @property
    def sort_key(self):
        return (self.system, self.time, self.direction.value, self.daggered)

    @property
    def slot(self):
        """Identity used to pair a factor with its reversed partner."""
        return (self.system, self.time, self.daggered)

    def reversed(self) -> "SpaceLabel":
        return SpaceLabel(self.system, self.time, self.direction.flipped(), self.daggered)

    def twin(self) -> "SpaceLabel":
        return SpaceLabel(self.system, self.time, self.direction.flipped(), not self.daggered)

    def with_time(self, t: TimeLike) -> "SpaceLabel":
        return SpaceLabel(self.system, _time(t), self.direction, self.daggered)

    def __str__(self):
        mark = "^" if self.direction is Direction.FORWARD else "_"
        dag = "+" if self.daggered else ""
        return f"{self.system}{dag}{mark}@{self.time}"


Factor = tuple  # (SpaceLabel, dim)


@dataclass(frozen=True)
class MtSpace:
    """Canonically sorted tuple of ``(SpaceLabel, dim)`` factors."""

    factors: tuple

    def __post_init__(self):
        facs = []
        for lab, dim in self.factors:
            if not isinstance(lab, SpaceLabel):
                lab = SpaceLabel(*lab)
            dim = int(dim)
            if dim < 1:
                raise DimensionMismatch(f"factor {lab} has dimension {dim}")
            facs.append((lab, dim))
        facs.sort(key=lambda f: f[0].sort_key)
        labels = [f[0] for f in facs]
        if len(set(labels)) != len(labels):
            raise SpaceMismatch("duplicate factor labels in a multiple-time space")
        object.__setattr__(self, "factors", tuple(facs))

    @property
    def labels(self) -> tuple:
        return tuple(f[0] for f in self.factors)

    @property
    def dims(self) -> tuple:
        return tuple(f[1] for f in self.factors)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims)) if self.factors else 1

    def __len__(self):
        return len(self.factors)

    def index(self, label: SpaceLabel) -> int:
        return self.labels.index(label)

    def dim_of(self, label: SpaceLabel) -> int:
        return self.factors[self.index(label)][1]

    def reversed(self) -> "MtSpace":
        return MtSpace(tuple((lab.reversed(), d) for lab, d in self.factors))

    def forward(self) -> tuple:
        return tuple(f for f in self.factors if f[0].direction is Direction.FORWARD)

    def backward(self) -> tuple:
        return tuple(f for f in self.factors if f[0].direction is Direction.BACKWARD)


def reversed_space(space: MtSpace) -> MtSpace:
    """Flip the direction of every factor."""
    return space.reversed()


def _canonical_perm(factors: Sequence) -> tuple[MtSpace, list[int]]:
    space = MtSpace(tuple(factors))
    given = [SpaceLabel(*l) if not isinstance(l, SpaceLabel) else l for l, _ in factors]
    perm = [given.index(lab) for lab in space.labels]
    return space, perm


class MtVector:
    """Pure multiple-time vector with a coefficient tensor in canonical order."""

    def __init__(self, space: MtSpace, coeffs):
        c = np.asarray(coeffs, dtype=complex)
        if c.size != space.dim:
            raise DimensionMismatch(f"{c.size} coefficients for a space of dim {space.dim}")
        self.space = space
        self.coeffs = c.reshape(space.dims)

    @classmethod
    def from_factors(cls, factors: Sequence, coeffs) -> "MtVector":
        """Build from factors in any order; ``coeffs`` follows that order."""
        dims = [int(d) for _, d in factors]
        space, perm = _canonical_perm(factors)
        c = np.asarray(coeffs, dtype=complex).reshape(dims) if dims else np.asarray(coeffs, dtype=complex).reshape(())
        return cls(space, c.transpose(perm))

    @property
    def flat(self) -> np.ndarray:
        return self.coeffs.reshape(-1)

    def norm(self) -> float:
        return float(np.linalg.norm(self.flat))

    def density(self) -> "MtDensityVector":
        v = self.flat
        return MtDensityVector(self.space, np.outer(v, v.conj()))

    def scalar(self) -> complex:
        if len(self.space):
            raise SpaceMismatch("vector is not a scalar")
        return complex(self.coeffs.reshape(()))

    def __repr__(self):
        return f"MtVector({[str(l) for l in self.space.labels]})"


class MtDensityVector:
    """Element of H (x) H^dagger stored as a dense operator on the plain layer."""

    def __init__(self, space: MtSpace, op):
        m = np.asarray(op, dtype=complex)
        n = space.dim
        if m.size != n * n:
            raise DimensionMismatch(f"operator of size {m.size} for space of dim {n}")
        self.space = space
        self.op = m.reshape(n, n)

    @classmethod
    def from_factors(cls, factors: Sequence, op) -> "MtDensityVector":
        dims = [int(d) for _, d in factors]
        space, perm = _canonical_perm(factors)
        n = len(dims)
        t = np.asarray(op, dtype=complex).reshape(dims + dims)
        t = t.transpose(perm + [n + p for p in perm])
        return cls(space, t.reshape(space.dim, space.dim))

    def tensor(self) -> np.ndarray:
        return self.op.reshape(self.space.dims + self.space.dims)

    def ordered(self, labels: Sequence[SpaceLabel]) -> np.ndarray:
        """Dense operator with factors permuted into ``labels`` order."""
        perm = [self.space.index(l) for l in labels]
        n = len(perm)
        t = self.tensor().transpose(perm + [n + p for p in perm])
        d = self.space.dim
        return t.reshape(d, d)

    def scalar(self) -> complex:
        if len(self.space):
            raise SpaceMismatch("density vector is not a scalar")
        return complex(self.op[0, 0])

    def __repr__(self):
        return f"MtDensityVector({[str(l) for l in self.space.labels]})"


@dataclass(frozen=True)
class MtInstrument:
    """Outcome-labelled density vectors on a common space."""

    outcomes: tuple  # ((label, MtDensityVector), ...)

    def __post_init__(self):
        outs = tuple((lab, j) for lab, j in self.outcomes)
        if not outs:
            raise SpaceMismatch("an instrument needs at least one outcome")
        space = outs[0][1].space
        for _, j in outs:
            if j.space != space:
                raise SpaceMismatch("instrument outcomes live on different spaces")
        object.__setattr__(self, "outcomes", outs)

    @property
    def space(self) -> MtSpace:
        return self.outcomes[0][1].space


_LETTERS = string.ascii_letters


def _pairing(sa: MtSpace, sb: MtSpace) -> list[tuple[int, int]]:
    pairs = []
    slots_b = {}
    for j, (lab, _) in enumerate(sb.factors):
        slots_b.setdefault(lab.slot, []).append(j)
    for i, (lab, d) in enumerate(sa.factors):
        for j in slots_b.get(lab.slot, []):
            other, db = sb.factors[j]
            if other.direction is lab.direction:
                raise NotComposable(f"factor {lab} appears twice with the same direction")
            if db != d:
                raise NotComposable(f"factor {lab} has dimension {d} vs {db}")
            pairs.append((i, j))
    return pairs


def _result_space(sa: MtSpace, sb: MtSpace, pairs) -> tuple[list, list, list]:
    used_a = {i for i, _ in pairs}
    used_b = {j for _, j in pairs}
    rest = [("a", i, sa.factors[i]) for i in range(len(sa)) if i not in used_a]
    rest += [("b", j, sb.factors[j]) for j in range(len(sb)) if j not in used_b]
    rest.sort(key=lambda r: r[2][0].sort_key)
    return rest, sorted(used_a), sorted(used_b)


def compose(a: MtVector, b: MtVector) -> MtVector:
    """Contract reversed factor pairs and tensor the rest."""
    pairs = _pairing(a.space, b.space)
    rest, _, _ = _result_space(a.space, b.space, pairs)
    na, nb = len(a.space), len(b.space)
    if na + nb > len(_LETTERS):
        raise DimensionMismatch("too many factors for dense contraction")
    ia = list(range(na))
    ib = list(range(na, na + nb))
    for i, j in pairs:
        ib[j] = ia[i]
    out = [(ia[k] if side == "a" else ib[k]) for side, k, _ in rest]
    res = np.einsum(a.coeffs, ia, b.coeffs, ib, out)
    space = MtSpace(tuple(f for _, _, f in rest))
    return MtVector(space, res)


def compose_density(a: MtDensityVector, b: MtDensityVector) -> MtDensityVector:
    """Composition applied to both the plain and the daggered layer."""
    pairs = _pairing(a.space, b.space)
    rest, _, _ = _result_space(a.space, b.space, pairs)
    na, nb = len(a.space), len(b.space)
    if 2 * (na + nb) > len(_LETTERS):
        raise DimensionMismatch("too many factors for dense contraction")
    ra, ca = list(range(na)), list(range(na, 2 * na))
    base = 2 * na
    rb, cb = list(range(base, base + nb)), list(range(base + nb, base + 2 * nb))
    for i, j in pairs:
        rb[j] = ra[i]
        cb[j] = ca[i]
    out_r = [(ra[k] if s == "a" else rb[k]) for s, k, _ in rest]
    out_c = [(ca[k] if s == "a" else cb[k]) for s, k, _ in rest]
    res = np.einsum(a.tensor(), ra + ca, b.tensor(), rb + cb, out_r + out_c, optimize=True)
    space = MtSpace(tuple(f for _, _, f in rest))
    return MtDensityVector(space, res)


def _full_contraction(eta: MtDensityVector, j: MtDensityVector) -> complex:
    return compose_density(eta, j).scalar()


def abl_probability(state: MtDensityVector, instrument: MtInstrument) -> dict:
    """Outcome probabilities for a density vector measured by an instrument."""
    if instrument.space != state.space.reversed():
        raise SpaceMismatch("instrument must live on the reversed space of the state")
    raw = [(lab, _full_contraction(state, j).real) for lab, j in instrument.outcomes]
    total = sum(w for _, w in raw)
    if total <= POSTSELECTION_TOL:
        raise PostSelectionImpossible(f"denominator {total!r} is not positive")
    return {lab: w / total for lab, w in raw}


def abl_probability_pure(psi: MtVector, kraus: Sequence) -> dict:
    """Pure-state rule with outcomes given as ``(label, MtVector)`` pairs."""
    if not kraus:
        raise SpaceMismatch("no outcomes")
    raw = []
    for lab, a in kraus:
        if a.space != psi.space.reversed():
            raise SpaceMismatch("Kraus vectors must live on the reversed space")
        raw.append((lab, abs(compose(psi, a).scalar()) ** 2))
    total = sum(w for _, w in raw)
    if total <= POSTSELECTION_TOL:
        raise PostSelectionImpossible(f"denominator {total!r} is not positive")
    return {lab: w / total for lab, w in raw}


def is_positive(eta: MtDensityVector, tol: float = POSITIVITY_TOL) -> bool:
    h = 0.5 * (eta.op + eta.op.conj().T)
    if np.linalg.norm(eta.op - h) > tol * max(1.0, np.linalg.norm(eta.op)):
        return False
    return bool(np.linalg.eigvalsh(h).min() >= -tol)


def spectral_decompose(eta: MtDensityVector, tol: float = POSITIVITY_TOL) -> list:
    """Weights and unit vectors with eta = sum_r p_r Psi_r (x) Psi_r^dagger.

    Terms come out in decreasing weight; numerically zero weights are dropped.
    """
    if not is_positive(eta, tol):
        raise NotPositive("density vector is not positive semidefinite")
    h = 0.5 * (eta.op + eta.op.conj().T)
    w, v = np.linalg.eigh(h)
    scale = max(float(np.abs(w).max()) if w.size else 0.0, 1.0)
    terms = []
    for k in range(len(w) - 1, -1, -1):
        if w[k] > tol * scale:
            terms.append((float(w[k]), MtVector(eta.space, v[:, k])))
    return terms


def op_equivalent(a: MtDensityVector, b: MtDensityVector, tol: float = 1e-9):
    """Proportionality constant k with a = k b, or None."""
    if a.space != b.space:
        raise SpaceMismatch("density vectors live on different spaces")
    return proportionality(a.op, b.op, tol)


def identity_operator(system: str, time: TimeLike, dim: int,
                      direction: Direction = Direction.BACKWARD) -> MtDensityVector:
    """sum_i <i|_A (x) |i>^{A dagger}: composing with it traces a factor out."""
    lab = SpaceLabel(system, _time(time), Direction(direction))
    return MtDensityVector(MtSpace(((lab, dim),)), np.eye(dim))


def two_time_state(pre, post, system: str, t_pre: TimeLike, t_post: TimeLike) -> MtVector:
    """<post|_{t_post} (x) |pre>^{t_pre} for kets ``pre`` and ``post``."""
    pre = np.asarray(pre, dtype=complex).reshape(-1)
    post = np.asarray(post, dtype=complex).reshape(-1)
    fwd = (SpaceLabel(system, _time(t_pre), Direction.FORWARD), pre.size)
    bwd = (SpaceLabel(system, _time(t_post), Direction.BACKWARD), post.size)
    return MtVector.from_factors([bwd, fwd], np.outer(post.conj(), pre))


def two_time_operator(k, system: str, t_in: TimeLike, t_out: TimeLike) -> MtVector:
    """Operator K from ``t_in`` to ``t_out`` written as sum K_oi |o>^{out} <i|_{in}."""
    k = np.asarray(k, dtype=complex)
    out = (SpaceLabel(system, _time(t_out), Direction.FORWARD), k.shape[0])
    inp = (SpaceLabel(system, _time(t_in), Direction.BACKWARD), k.shape[1])
    return MtVector.from_factors([out, inp], k)


def stretch_label(label: SpaceLabel, new_time: TimeLike) -> SpaceLabel:
    """Move one factor in time, respecting its direction of evolution."""
    t = _time(new_time)
    if label.direction is Direction.FORWARD and t < label.time:
        raise FreeOperationViolation(f"forward factor {label} cannot move earlier to {t}")
    if label.direction is Direction.BACKWARD and t > label.time:
        raise FreeOperationViolation(f"backward factor {label} cannot move later to {t}")
    return label.with_time(t)


def stretch(obj, system: str, direction: Direction, new_time: TimeLike):
    """Apply a free time stretch to every factor of ``system`` with ``direction``.

    Works on spaces, vectors and density vectors. The coefficients are
    untouched; only time labels change, so the result is the same object up
    to relabelling.
    """
    direction = Direction(direction)
    space = obj if isinstance(obj, MtSpace) else obj.space
    hits = [i for i, (l, _) in enumerate(space.factors)
            if l.system == system and l.direction is direction]
    if not hits:
        raise SpaceMismatch(f"no {direction.value} factor for system {system!r}")
    facs = list(space.factors)
    for i in hits:
        lab, d = facs[i]
        facs[i] = (stretch_label(lab, new_time), d)
    if isinstance(obj, MtSpace):
        return MtSpace(tuple(facs))
    if isinstance(obj, MtVector):
        return MtVector.from_factors(facs, obj.coeffs)
    return MtDensityVector.from_factors(facs, obj.op)


def as_operator(psi: MtVector) -> tuple[np.ndarray, tuple, tuple]:
    """Read a vector as a map from its backward to its forward factors.

    Returns the matrix together with the backward and forward factor tuples
    (canonical order) that index its columns and rows.
    """
    space = psi.space
    f_idx = [i for i, (l, _) in enumerate(space.factors) if l.direction is Direction.FORWARD]
    b_idx = [i for i, (l, _) in enumerate(space.factors) if l.direction is Direction.BACKWARD]
    t = psi.coeffs.transpose(f_idx + b_idx)
    df = int(np.prod([space.dims[i] for i in f_idx])) if f_idx else 1
    db = int(np.prod([space.dims[i] for i in b_idx])) if b_idx else 1
    return (t.reshape(df, db),
            tuple(space.factors[i] for i in b_idx),
            tuple(space.factors[i] for i in f_idx))


def from_operator(c, backward: Sequence, forward: Sequence) -> MtVector:
    """Inverse of :func:`as_operator`."""
    c = np.asarray(c, dtype=complex)
    factors = list(forward) + list(backward)
    return MtVector.from_factors(factors, c.reshape(-1))


def labels_of(obj) -> Iterable[SpaceLabel]:
    space = obj if isinstance(obj, MtSpace) else obj.space
    return space.labels
