"""Time-ordering preorder on multiple-time states.

An ordering ``a`` can be turned into ``b`` for free when forward systems only
move later and backward systems only move earlier. Deciding this is a system
of difference constraints over two sets of integer times (one realising each
ordering); it is feasible exactly when the constraint graph has no positive
cycle, which Bellman-Ford detects.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .mts import Direction, MtDensityVector, MtSpace, SpaceLabel, stretch


class Relation(enum.Enum):
    EQUAL = "equal"
    STRICTLY_ABOVE = "strictly_above"
    STRICTLY_BELOW = "strictly_below"
    INCOMPARABLE = "incomparable"


class OrderClass(enum.Enum):
    TWO_TO = "2TO"
    TWO_TS = "2TS"
    OTHER = "other"


def ranks_of(times: Sequence) -> tuple:
    """Dense ranks (0 = earliest); equal times share a rank."""
    levels = sorted(set(times))
    pos = {t: k for k, t in enumerate(levels)}
    return tuple(pos[t] for t in times)


@dataclass(frozen=True)
class OrderProfile:
    """Directed systems with two weak orderings given as rank lists."""

    systems: tuple  # ((name, Direction), ...)
    order_a: tuple
    order_b: tuple

    def __post_init__(self):
        systems = tuple((str(n), Direction(d)) for n, d in self.systems)
        object.__setattr__(self, "systems", systems)
        object.__setattr__(self, "order_a", ranks_of(self.order_a))
        object.__setattr__(self, "order_b", ranks_of(self.order_b))
        if not (len(systems) == len(self.order_a) == len(self.order_b)):
            raise ValueError("systems and orderings must have the same length")

    @property
    def directions(self) -> tuple:
        return tuple(d for _, d in self.systems)

    def swapped(self) -> "OrderProfile":
        return OrderProfile(self.systems, self.order_b, self.order_a)


def classify_ranks(directions: Sequence[Direction], ranks: Sequence[int]) -> OrderClass:
    fw = [r for d, r in zip(directions, ranks) if Direction(d) is Direction.FORWARD]
    bw = [r for d, r in zip(directions, ranks) if Direction(d) is Direction.BACKWARD]
    if not fw or not bw:
        return OrderClass.OTHER
    if max(bw) < min(fw):
        return OrderClass.TWO_TO
    if max(fw) < min(bw):
        return OrderClass.TWO_TS
    return OrderClass.OTHER


def classify(m) -> OrderClass:
    """Class of a density vector (or space) from its factor times."""
    space = m if isinstance(m, MtSpace) else m.space
    labels = [l for l in space.labels if not l.daggered]
    return classify_ranks([l.direction for l in labels], ranks_of([l.time for l in labels]))


def _edges(directions, ra, rb):
    n = len(directions)
    edges = []
    for layer, ranks in ((0, ra), (n, rb)):
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                if ranks[i] < ranks[j]:
                    edges.append((layer + i, layer + j, 1))
                elif ranks[i] == ranks[j]:
                    edges.append((layer + i, layer + j, 0))
    for i, d in enumerate(directions):
        if d is Direction.FORWARD:
            edges.append((i, n + i, 0))  # t'_i >= t_i
        else:
            edges.append((n + i, i, 0))  # t_i >= t'_i
    return edges


def _solve(directions, ra, rb):
    """Longest-path times, or a positive cycle as a list of edges."""
    n = len(directions)
    edges = _edges(directions, ra, rb)
    m = 2 * n
    dist = [0] * m
    pred = [None] * m
    changed_at = None
    for it in range(m + 1):
        changed_at = None
        for e in edges:
            u, v, w = e
            if dist[u] + w > dist[v]:
                dist[v] = dist[u] + w
                pred[v] = e
                changed_at = v
        if changed_at is None:
            return dist, None
    # walk back m steps to land on the cycle, then collect it
    v = changed_at
    for _ in range(m):
        v = pred[v][0]
    cycle, start = [], v
    while True:
        e = pred[v]
        cycle.append(e)
        v = e[0]
        if v == start:
            break
    cycle.reverse()
    return None, cycle


def reachable(directions, ra, rb) -> bool:
    dist, _ = _solve([Direction(d) for d in directions], ranks_of(ra), ranks_of(rb))
    return dist is not None


@dataclass(frozen=True)
class StretchStep:
    system: str
    direction: Direction
    from_time: int
    to_time: int


@dataclass
class OrderVerdict:
    relation: Relation
    witness: Optional[list] = None  # steps turning the higher ordering into the lower one
    start_times: Optional[tuple] = None
    certificate: dict = field(default_factory=dict)


def _witness(profile: OrderProfile, dist):
    n = len(profile.systems)
    t, tp = dist[:n], dist[n:]
    steps = [StretchStep(name, d, t[i], tp[i])
             for i, (name, d) in enumerate(profile.systems) if t[i] != tp[i]]
    return tuple(t), steps


def _describe(profile: OrderProfile, cycle) -> list:
    n = len(profile.systems)

    def var(k):
        layer = "a" if k < n else "b"
        return f"{profile.systems[k % n][0]}[{layer}]"

    return [f"{var(v)} >= {var(u)} + {w}" for u, v, w in cycle]


def decide_order(profile: OrderProfile) -> OrderVerdict:
    """Compare ordering a with ordering b under free time stretches.

    ``STRICTLY_ABOVE`` means a can be turned into b but not back. The witness
    always runs from the higher ordering to the lower one; for
    ``INCOMPARABLE`` the certificate lists a violated constraint cycle for
    each direction.
    """
    dirs = profile.directions
    fwd, cyc_f = _solve(dirs, profile.order_a, profile.order_b)
    bwd, cyc_b = _solve(dirs, profile.order_b, profile.order_a)
    if fwd is not None and bwd is not None:
        start, steps = _witness(profile, fwd)
        return OrderVerdict(Relation.EQUAL, steps, start)
    if fwd is not None:
        start, steps = _witness(profile, fwd)
        return OrderVerdict(Relation.STRICTLY_ABOVE, steps, start,
                            {"b_to_a": _describe(profile, cyc_b)})
    if bwd is not None:
        start, steps = _witness(profile.swapped(), bwd)
        return OrderVerdict(Relation.STRICTLY_BELOW, steps, start,
                            {"a_to_b": _describe(profile, cyc_f)})
    return OrderVerdict(Relation.INCOMPARABLE, None, None,
                        {"a_to_b": _describe(profile, cyc_f),
                         "b_to_a": _describe(profile, cyc_b)})


def replay_witness(systems: Sequence, start_times: Sequence[int], steps: Sequence[StretchStep]) -> tuple:
    """Apply witness steps with the MTS stretch primitive; return final ranks."""
    facs = tuple((SpaceLabel(name, Fraction(t), Direction(d)), 1)
                 for (name, d), t in zip(systems, start_times))
    space = MtSpace(facs)
    for s in steps:
        space = stretch(space, s.system, s.direction, s.to_time)
    lookup = {(l.system, l.direction): l.time for l in space.labels}
    return ranks_of([lookup[(name, Direction(d))] for name, d in systems])


def _factor_key(lab: SpaceLabel):
    return (lab.system, lab.direction, lab.daggered)


def is_isomorphic(a: MtDensityVector, b: MtDensityVector, tol: float = 1e-9) -> Optional[OrderProfile]:
    """Profile pairing the two orderings if a and b differ only in time labels.

    Factors are matched by system name and direction; repeated keys are
    matched in time order.
    """
    if len(a.space) != len(b.space):
        return None

    def keyed(space):
        groups = {}
        for lab, d in sorted(space.factors, key=lambda f: f[0].time):
            groups.setdefault(_factor_key(lab), []).append((lab, d))
        return groups

    ga, gb = keyed(a.space), keyed(b.space)
    if set(ga) != set(gb) or any(len(ga[k]) != len(gb[k]) for k in ga):
        return None
    la, lb = [], []
    for k in sorted(ga, key=lambda k: (k[0], k[1].value, k[2])):
        for (x, dx), (y, dy) in zip(ga[k], gb[k]):
            if dx != dy:
                return None
            la.append(x)
            lb.append(y)
    oa, ob = a.ordered(la), b.ordered(lb)
    if np.linalg.norm(oa - ob) > tol * max(1.0, np.linalg.norm(oa)):
        return None
    systems = tuple((x.system, x.direction) for x in la)
    return OrderProfile(systems, ranks_of([x.time for x in la]), ranks_of([y.time for y in lb]))


def weak_orders(n: int) -> list[tuple]:
    """All rank lists of n labelled items (ordered set partitions)."""
    out = set()
    for ranks in itertools.product(range(n), repeat=n):
        if set(ranks) == set(range(max(ranks) + 1 if ranks else 0)):
            out.add(ranks)
    return sorted(out)


@dataclass
class ExtremalityReport:
    directions: tuple
    n_orders: int
    checks: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    incomparable: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def verify_extremality(directions: Sequence[Direction]) -> ExtremalityReport:
    """Exhaustively check minimality of 2TOs and maximality of 2TSs.

    Also checks reflexivity, transitivity and that verdicts for (a, b) and
    (b, a) mirror each other. Intended for up to four systems.
    """
    dirs = tuple(Direction(d) for d in directions)
    n = len(dirs)
    if n > 4:
        raise ValueError("exhaustive verification is limited to four systems")
    orders = weak_orders(n)
    m = len(orders)
    systems = tuple((f"S{k}", d) for k, d in enumerate(dirs))
    mirror = {Relation.EQUAL: Relation.EQUAL, Relation.INCOMPARABLE: Relation.INCOMPARABLE,
              Relation.STRICTLY_ABOVE: Relation.STRICTLY_BELOW,
              Relation.STRICTLY_BELOW: Relation.STRICTLY_ABOVE}
    up = {Relation.EQUAL: (True, True), Relation.STRICTLY_ABOVE: (True, False),
          Relation.STRICTLY_BELOW: (False, True), Relation.INCOMPARABLE: (False, False)}
    report = ExtremalityReport(dirs, m)
    fails = report.failures
    reach = np.zeros((m, m), dtype=bool)
    for i in range(m):
        reach[i, i] = decide_order(OrderProfile(systems, orders[i], orders[i])).relation is Relation.EQUAL
        for j in range(i + 1, m):
            v = decide_order(OrderProfile(systems, orders[i], orders[j])).relation
            w = decide_order(OrderProfile(systems, orders[j], orders[i])).relation
            if mirror[v] is not w:
                fails.append(f"antisymmetry {orders[i]} {orders[j]}")
            if v is Relation.INCOMPARABLE:
                report.incomparable.append((orders[i], orders[j]))
            reach[i, j], reach[j, i] = up[v]
    if not reach.diagonal().all():
        fails.append("reflexivity")
    composed = (reach.astype(np.int64) @ reach.astype(np.int64)) > 0
    if (composed & ~reach).any():
        fails.append("transitivity")
    classes = [classify_ranks(dirs, o) for o in orders]
    tos = [k for k, c in enumerate(classes) if c is OrderClass.TWO_TO]
    tss = [k for k, c in enumerate(classes) if c is OrderClass.TWO_TS]
    for k in range(m):
        for lo in tos:
            if classes[k] is OrderClass.TWO_TO:
                if not (reach[k, lo] and reach[lo, k]):
                    fails.append(f"2TO orderings {orders[k]} and {orders[lo]} not equal")
            elif not (reach[k, lo] and not reach[lo, k]):
                fails.append(f"2TO {orders[lo]} not strictly below {orders[k]}")
        for hi in tss:
            if classes[k] is OrderClass.TWO_TS:
                if not (reach[k, hi] and reach[hi, k]):
                    fails.append(f"2TS orderings {orders[k]} and {orders[hi]} not equal")
            elif not (reach[hi, k] and not reach[k, hi]):
                fails.append(f"2TS {orders[hi]} not strictly above {orders[k]}")
    report.checks = {"orderings": m, "pairs": m * m, "two_to": len(tos), "two_ts": len(tss)}
    return report


def audit_stretches(records) -> list[str]:
    """Problems with stretch records that claim to be free operations."""
    problems = []
    for r in records:
        if getattr(r, "via_ctc", False):
            continue
        d = Direction(r.direction)
        if d is Direction.FORWARD and r.to_time < r.from_time:
            problems.append(f"forward {r.system} moved earlier without a CTC")
        if d is Direction.BACKWARD and r.to_time > r.from_time:
            problems.append(f"backward {r.system} moved later without a CTC")
    return problems
