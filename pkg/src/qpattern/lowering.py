"""Grover workload construction and lowering of standard gates to the native set.

No routing is performed: every two-qubit interaction must already sit on an
edge of the coupling graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .circuit import Circuit, Gate, Operation, cz, measure, rz, sx, x
from .errors import InvalidArgument, RoutingRequired, UnsupportedGate

ARITY = {"h": 1, "x": 1, "z": 1, "rz": 1, "measure": 1, "cx": 2, "ccx": 3}


@dataclass(frozen=True)
class LogicalOp:
    name: str
    qubits: tuple[int, ...]
    angle: float | None = None

    def __post_init__(self):
        name = self.name.lower()
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if name not in ARITY:
            raise UnsupportedGate(f"unknown logical gate {self.name!r}")
        if len(self.qubits) != ARITY[name] or len(set(self.qubits)) != len(self.qubits):
            raise InvalidArgument(f"{name} needs {ARITY[name]} distinct qubits, got {self.qubits}")
        if (name == "rz") != (self.angle is not None):
            raise InvalidArgument(f"angle misuse on {name}")


@dataclass
class LogicalCircuit:
    num_qubits: int
    ops: list[LogicalOp] = field(default_factory=list)

    def add(self, name, *qubits, angle=None):
        for q in qubits:
            if not 0 <= q < self.num_qubits:
                raise InvalidArgument(f"logical qubit {q} out of range")
        self.ops.append(LogicalOp(name, qubits, angle))
        return self


@dataclass(frozen=True)
class CouplingGraph:
    edges: frozenset

    def __init__(self, edges: Iterable[Sequence[int]]):
        norm = set()
        for a, b in edges:
            if a == b:
                raise InvalidArgument(f"self-loop on q{a}")
            norm.add(frozenset((int(a), int(b))))
        object.__setattr__(self, "edges", frozenset(norm))

    def has_edge(self, a: int, b: int) -> bool:
        return frozenset((a, b)) in self.edges

    @property
    def qubits(self) -> frozenset[int]:
        return frozenset(q for e in self.edges for q in e)

    def neighbors(self, q: int) -> list[int]:
        return sorted(p for e in self.edges if q in e for p in e if p != q)

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(tuple(sorted(e)) for e in self.edges)


def star_layout(hub: int, leaves: Sequence[int]) -> tuple[tuple[int, ...], CouplingGraph]:
    """Layout for a 4-qubit Grover workload: data qubits on the leaves, ancilla on the hub.

    Returns the logical-to-physical tuple (logical 3 is the ancilla) and the star graph.
    """
    qubits = [hub, *leaves]
    if len(leaves) != 3:
        raise InvalidArgument("a star layout needs exactly 3 leaves")
    if len(set(qubits)) != 4 or any(q < 0 for q in qubits):
        raise InvalidArgument(f"star layout qubits must be 4 distinct indices, got {qubits}")
    return (*leaves, hub), CouplingGraph((hub, leaf) for leaf in leaves)


# -- Grover ------------------------------------------------------------------

# Gray-code walk over the nonzero parities of three bits. Each step XORs one
# data qubit into the accumulator; the sign is that of the phase term.
_CCZ_WALK = ((0, +1), (1, -1), (0, +1), (2, -1), (0, +1), (1, -1), (0, +1), (2, None))


def _ccz_via_accumulator(lc: LogicalCircuit, data: Sequence[int], acc: int):
    """Doubly-controlled Z on ``data`` using a clean accumulator qubit.

    (-1)^(abc) is a sum of +-pi/4 phases on the seven parities of a, b, c, so
    walking the accumulator through those parities with CX from the data
    qubits only ever needs data-accumulator couplings.
    """
    for d, sign in _CCZ_WALK:
        lc.add("cx", data[d], acc)
        if sign is not None:
            lc.add("rz", acc, angle=sign * math.pi / 4)


def grover_circuit(marked: str, iterations: int = 2) -> LogicalCircuit:
    """3-data-qubit Grover search with one accumulator ancilla (logical qubit 3).

    The first data qubit is the most significant bit of ``marked``.
    """
    if not isinstance(marked, str) or len(marked) != 3 or set(marked) - {"0", "1"}:
        raise InvalidArgument(f"marked must be a 3-bit string, got {marked!r}")
    if not isinstance(iterations, int) or iterations < 1:
        raise InvalidArgument("iterations must be >= 1")
    data, anc = (0, 1, 2), 3
    lc = LogicalCircuit(4)
    for q in data:
        lc.add("h", q)
    for _ in range(iterations):
        flips = [q for q, bit in zip(data, marked) if bit == "0"]
        for q in flips:
            lc.add("x", q)
        _ccz_via_accumulator(lc, data, anc)
        for q in flips:
            lc.add("x", q)
        # diffusion
        for q in data:
            lc.add("h", q)
        for q in data:
            lc.add("x", q)
        _ccz_via_accumulator(lc, data, anc)
        for q in data:
            lc.add("x", q)
        for q in data:
            lc.add("h", q)
    for q in data:
        lc.add("measure", q)
    return lc


# -- lowering ----------------------------------------------------------------

def _h(q):
    return [rz(math.pi / 2, q), sx(q), rz(math.pi / 2, q)]


def _cx(c, t, graph):
    if not graph.has_edge(c, t):
        raise RoutingRequired(f"no coupling between q{c} and q{t}")
    return [*_h(t), cz(c, t), *_h(t)]


def _ccx(a, b, c, graph):
    t, tdg = math.pi / 4, -math.pi / 4
    return [
        *_h(c),
        *_cx(b, c, graph), rz(tdg, c),
        *_cx(a, c, graph), rz(t, c),
        *_cx(b, c, graph), rz(tdg, c),
        *_cx(a, c, graph), rz(t, b), rz(t, c),
        *_h(c),
        *_cx(a, b, graph), rz(t, a), rz(tdg, b),
        *_cx(a, b, graph),
    ]


def merge_adjacent_rz(ops: Sequence[Operation]) -> list[Operation]:
    """Fuse runs of RZ that are consecutive on their qubit; drop identity results."""
    out: list[Operation | None] = []
    last_on: dict[int, int] = {}
    for op in ops:
        if op.kind is Gate.RZ:
            q = op.qubits[0]
            j = last_on.get(q)
            if j is not None and out[j] is not None and out[j].kind is Gate.RZ:
                angle = out[j].angle + op.angle
                out[j] = rz(angle, q)
                continue
        out.append(op)
        for q in op.qubits:
            last_on[q] = len(out) - 1
    kept = []
    for op in out:
        if op.kind is Gate.RZ and abs(math.remainder(op.angle, 4 * math.pi)) < 1e-12:
            continue
        kept.append(op)
    return kept


def lower_to_native(lc: LogicalCircuit, layout: Sequence[int] | Mapping[int, int], graph: CouplingGraph,
                    *, backend_id: str = "mock", num_physical_qubits: int | None = None,
                    merge_rz: bool = False) -> Circuit:
    if isinstance(layout, Mapping):
        phys = dict(layout)
    else:
        phys = dict(enumerate(layout))
    if len(set(phys.values())) != len(phys):
        raise InvalidArgument("layout is not injective")
    missing = {q for op in lc.ops for q in op.qubits} - set(phys)
    if missing:
        raise InvalidArgument(f"layout misses logical qubits {sorted(missing)}")
    ops: list[Operation] = []
    for op in lc.ops:
        qs = [phys[q] for q in op.qubits]
        if op.name == "h":
            ops += _h(qs[0])
        elif op.name == "x":
            ops.append(x(qs[0]))
        elif op.name == "z":
            ops.append(rz(math.pi, qs[0]))
        elif op.name == "rz":
            ops.append(rz(op.angle, qs[0]))
        elif op.name == "cx":
            ops += _cx(qs[0], qs[1], graph)
        elif op.name == "ccx":
            ops += _ccx(qs[0], qs[1], qs[2], graph)
        elif op.name == "measure":
            ops.append(measure(qs[0]))
        else:  # pragma: no cover - LogicalOp validates names
            raise UnsupportedGate(op.name)
    if merge_rz:
        ops = merge_adjacent_rz(ops)
    if num_physical_qubits is None:
        num_physical_qubits = max([q + 1 for q in phys.values()] + [q + 1 for q in graph.qubits])
    return Circuit(backend_id, num_physical_qubits, tuple(ops))
