"""Disrupting pattern occurrences with commuting adjacent swaps.

Two gates commute when they act on disjoint qubits or are both diagonal in
the computational basis (rz, cz). Swapping such a pair keeps the unitary,
and swaps that would change the moment count are refused, so depth is kept
as well.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field
from typing import Sequence

from .circuit import Circuit, Gate, Operation, moment_indices
from .errors import InvalidArgument, QPatternError, RejectedSwap
from .matching import Timelines
from .patterns import Occurrence, PatternDB, scan
from .sim import MAX_UNITARY_QUBITS, equal_up_to_phase, ideal_unitary


def commutes(a: Operation, b: Operation) -> bool:
    shared = set(a.qubits) & set(b.qubits)
    if not shared:
        return True
    if Gate.MEASURE in (a.kind, b.kind):
        return False
    return a.kind.diagonal and b.kind.diagonal


def _n_moments(ops) -> int:
    idx = moment_indices(ops)
    return max(idx) + 1 if idx else 0


def swap_adjacent(circuit: Circuit, i: int, j: int) -> Circuit:
    """Exchange the ops at positions ``i`` and ``j``.

    They must be neighbours on every timeline they share (or neighbours in op
    order when they share none). Other ops keep their relative order as far
    as the new dependency order allows.
    """
    ops = circuit.ops
    if i == j or not (0 <= i < len(ops) and 0 <= j < len(ops)):
        raise InvalidArgument(f"bad swap positions {i}, {j}")
    i, j = min(i, j), max(i, j)
    a, b = ops[i], ops[j]
    shared = set(a.qubits) & set(b.qubits)
    tl = Timelines(ops)
    if shared:
        for q in shared:
            if tl.index[(q, j)] != tl.index[(q, i)] + 1:
                raise InvalidArgument(f"ops {i} and {j} are not adjacent on q{q}")
    elif j != i + 1:
        raise InvalidArgument(f"ops {i} and {j} share no qubit and are not neighbours")
    if not commutes(a, b):
        raise RejectedSwap(f"{a} and {b} do not commute")

    succ: dict[int, list[int]] = {p: [] for p in range(len(ops))}
    indeg = [0] * len(ops)
    for q, line in tl.line.items():
        line = list(line)
        if q in shared:
            k = line.index(i)
            line[k], line[k + 1] = line[k + 1], line[k]
        for u, v in zip(line, line[1:]):
            succ[u].append(v)
            indeg[v] += 1
    prio = [float(p) for p in range(len(ops))]
    prio[j] = i - 0.5
    heap = [(prio[p], p) for p in range(len(ops)) if indeg[p] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        _, p = heapq.heappop(heap)
        order.append(p)
        for v in succ[p]:
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(heap, (prio[v], v))
    return circuit.replace_ops(ops[p] for p in order)


@dataclass
class TransformResult:
    circuit: Circuit
    initial: int
    disrupted: int
    undisruptable: list[Occurrence]
    untouched: list[Occurrence] = field(default_factory=list)
    swaps_applied: list[tuple[int, int]] = field(default_factory=list)
    elapsed: float = 0.0
    verified_unitary: bool | None = None

    def to_dict(self) -> dict:
        return {
            "initial_occurrences": self.initial,
            "disrupted": self.disrupted,
            "undisruptable": [o.to_dict() for o in self.undisruptable],
            "untouched": [o.to_dict() for o in self.untouched],
            "swaps_applied": [list(s) for s in self.swaps_applied],
            "verified_unitary": self.verified_unitary,
            "metadata": {"elapsed_s": self.elapsed},
        }


def _candidate_swaps(circuit: Circuit, occ: Occurrence, tl: Timelines):
    ops = circuit.ops
    seen = set()
    for p in occ.positions:
        for q in ops[p].qubits:
            k = tl.index[(q, p)]
            for nb in (tl.at(q, k - 1), tl.at(q, k + 1)):
                if nb is None:
                    continue
                pair = (min(p, nb), max(p, nb))
                if pair in seen:
                    continue
                seen.add(pair)
                a, b = ops[pair[0]], ops[pair[1]]
                if not commutes(a, b):
                    continue
                moves_rz = a.kind is Gate.RZ or b.kind is Gate.RZ
                yield (not moves_rz, min(a.id, b.id), max(a.id, b.id)), pair


def _same(a: Occurrence, b: Occurrence) -> bool:
    return a.op_ids == b.op_ids and a.pattern_key == b.pattern_key


def disrupt(circuit: Circuit, db: PatternDB, occurrences: Sequence[Occurrence] | None = None,
            max_disruptions: int | None = None, check_unitary: bool = True) -> TransformResult:
    """Greedily break occurrences, earliest first.

    ``occurrences`` defaults to a fresh scan. With ``max_disruptions`` only
    that many occurrences (by ascending position) are broken; the rest are
    reported as untouched.
    """
    start = time.perf_counter()
    current = circuit
    occs = list(occurrences) if occurrences is not None else scan(current, db)
    initial = len(occs)
    depth = _n_moments(current.ops)
    stuck: list[Occurrence] = []
    swaps: list[tuple[int, int]] = []
    broken = 0
    while occs and (max_disruptions is None or broken < max_disruptions):
        target = next((o for o in occs if not any(_same(o, s) for s in stuck)), None)
        if target is None:
            break
        tl = Timelines(current.ops)
        applied = False
        for _, (i, j) in sorted(_candidate_swaps(current, target, tl)):
            try:
                trial = swap_adjacent(current, i, j)
            except (InvalidArgument, RejectedSwap):
                continue
            if _n_moments(trial.ops) != depth:
                continue
            after = scan(trial, db)
            if len(after) >= len(occs) or any(_same(target, o) for o in after):
                continue
            swaps.append((current.ops[i].id, current.ops[j].id))
            broken += len(occs) - len(after)
            current, occs, applied = trial, after, True
            break
        if not applied:
            stuck.append(target)
    final = scan(current, db)
    undisruptable = [o for o in final if any(_same(o, s) for s in stuck)]
    untouched = [o for o in final if not any(_same(o, s) for s in stuck)]
    verified = None
    if check_unitary and len(circuit.used_qubits) <= MAX_UNITARY_QUBITS and swaps:
        verified = equal_up_to_phase(ideal_unitary(current.without_measurements()),
                                     ideal_unitary(circuit.without_measurements()))
        if not verified:
            raise QPatternError("rewritten circuit is not equivalent to its input")
    return TransformResult(current, initial, initial - len(final), undisruptable, untouched, swaps,
                           time.perf_counter() - start, verified)
