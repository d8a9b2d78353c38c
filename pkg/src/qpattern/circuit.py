"""Native-gate circuit IR: operations, moments, segments and serialization.

The text format is one operation per line::

    backend: ibm_fez; qubits: 156;
    sx q107;
    rz(0.393) q107;
    cz q108, q107;
    measure q97;

``#`` starts a comment. The JSON form is
``{"backend_id", "num_physical_qubits", "ops": [{"kind", "angle"?, "qubits"}]}``.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .errors import CircuitParseError, InvalidArgument, UnsupportedGate


class Gate(str, Enum):
    RZ = "rz"
    SX = "sx"
    X = "x"
    CZ = "cz"
    MEASURE = "measure"

    @property
    def arity(self) -> int:
        return 2 if self is Gate.CZ else 1

    @property
    def diagonal(self) -> bool:
        """Diagonal in the computational basis."""
        return self in (Gate.RZ, Gate.CZ)

    @property
    def symmetric(self) -> bool:
        return self is Gate.CZ

    @classmethod
    def parse(cls, name: str) -> "Gate":
        try:
            return cls(name.lower())
        except ValueError:
            raise UnsupportedGate(f"unsupported gate {name!r}") from None


@dataclass(frozen=True)
class Operation:
    kind: Gate
    qubits: tuple[int, ...]
    angle: float | None = None
    # identity of the op; assigned from its position when the circuit is built
    # and carried along by rewrites. Not part of equality.
    id: int | None = field(default=None, compare=False)

    def __post_init__(self):
        kind = Gate(self.kind)
        object.__setattr__(self, "kind", kind)
        qubits = tuple(int(q) for q in self.qubits)
        object.__setattr__(self, "qubits", qubits)
        if len(qubits) != kind.arity:
            raise InvalidArgument(f"{kind.value} acts on {kind.arity} qubit(s), got {len(qubits)}")
        if any(q < 0 for q in qubits):
            raise InvalidArgument(f"negative qubit index in {qubits}")
        if len(set(qubits)) != len(qubits):
            raise InvalidArgument(f"repeated qubit in {kind.value} {qubits}")
        if kind is Gate.RZ:
            if self.angle is None:
                raise InvalidArgument("rz requires an angle")
            object.__setattr__(self, "angle", float(self.angle))
        elif self.angle is not None:
            raise InvalidArgument(f"{kind.value} takes no angle")

    def with_id(self, new_id: int) -> "Operation":
        return Operation(self.kind, self.qubits, self.angle, new_id)

    def signature(self) -> tuple:
        """Hashable (kind, angle, qubits) triple used for multiset comparisons."""
        return (self.kind.value, self.angle, self.qubits)

    def __str__(self) -> str:
        qs = ", ".join(f"q{q}" for q in self.qubits)
        if self.kind is Gate.RZ:
            return f"rz({self.angle!r}) {qs};"
        return f"{self.kind.value} {qs};"


def rz(angle, q, id=None):
    return Operation(Gate.RZ, (q,), angle, id)


def sx(q, id=None):
    return Operation(Gate.SX, (q,), None, id)


def x(q, id=None):
    return Operation(Gate.X, (q,), None, id)


def cz(a, b, id=None):
    return Operation(Gate.CZ, (a, b), None, id)


def measure(q, id=None):
    return Operation(Gate.MEASURE, (q,), None, id)


@dataclass(frozen=True)
class Circuit:
    backend_id: str
    num_physical_qubits: int
    ops: tuple[Operation, ...] = ()

    def __post_init__(self):
        ops = tuple(self.ops)
        if any(op.id is None for op in ops):
            ops = tuple(op if op.id is not None else op.with_id(i) for i, op in enumerate(ops))
        object.__setattr__(self, "ops", ops)
        if len({op.id for op in ops}) != len(ops):
            raise InvalidArgument("duplicate operation ids")
        n = self.num_physical_qubits
        measured = set()
        for op in ops:
            for q in op.qubits:
                if q >= n:
                    raise InvalidArgument(f"qubit {q} outside device of {n} qubits")
                if q in measured:
                    raise InvalidArgument(f"operation on q{q} after its measurement")
            if op.kind is Gate.MEASURE:
                measured.add(op.qubits[0])

    @property
    def used_qubits(self) -> frozenset[int]:
        return frozenset(q for op in self.ops for q in op.qubits)

    @property
    def measured_qubits(self) -> tuple[int, ...]:
        """Measured qubits in measurement order (first is the most significant bit)."""
        return tuple(op.qubits[0] for op in self.ops if op.kind is Gate.MEASURE)

    def __len__(self):
        return len(self.ops)

    def replace_ops(self, ops: Iterable[Operation]) -> "Circuit":
        return Circuit(self.backend_id, self.num_physical_qubits, tuple(ops))

    def renumbered(self) -> "Circuit":
        return self.replace_ops(op.with_id(i) for i, op in enumerate(self.ops))

    def without_measurements(self) -> "Circuit":
        return self.replace_ops(op for op in self.ops if op.kind is not Gate.MEASURE)

    def gate_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for op in self.ops:
            counts[op.kind.value] = counts.get(op.kind.value, 0) + 1
        return counts

    def fingerprint(self) -> str:
        import hashlib

        return hashlib.blake2b(serialize_circuit(self).encode(), digest_size=16).hexdigest()


@dataclass(frozen=True)
class Moment:
    index: int
    ops: tuple[Operation, ...]


@dataclass(frozen=True)
class Segment:
    index: int
    moment_indices: range
    ops: tuple[Operation, ...]


def moment_indices(ops: Sequence[Operation]) -> list[int]:
    """Greedy ASAP moment of every op, in op order."""
    next_free: dict[int, int] = {}
    out = []
    for op in ops:
        m = max((next_free.get(q, 0) for q in op.qubits), default=0)
        for q in op.qubits:
            next_free[q] = m + 1
        out.append(m)
    return out


def num_moments(circuit: Circuit) -> int:
    idx = moment_indices(circuit.ops)
    return max(idx) + 1 if idx else 0


def partition_into_moments(circuit: Circuit) -> list[Moment]:
    idx = moment_indices(circuit.ops)
    buckets: list[list[Operation]] = [[] for _ in range(max(idx) + 1 if idx else 0)]
    for op, m in zip(circuit.ops, idx):
        buckets[m].append(op)
    return [Moment(i, tuple(b)) for i, b in enumerate(buckets)]


def group_segments(moments: Sequence[Moment], segment_size: int = 3) -> list[Segment]:
    if segment_size < 1:
        raise InvalidArgument("segment_size must be >= 1")
    segments = []
    for s, start in enumerate(range(0, len(moments), segment_size)):
        chunk = moments[start:start + segment_size]
        ops = tuple(op for m in chunk for op in m.ops)
        segments.append(Segment(s, range(start, start + len(chunk)), ops))
    return segments


def segments_of(circuit: Circuit, segment_size: int = 3) -> list[Segment]:
    return group_segments(partition_into_moments(circuit), segment_size)


def remove_segments(circuit: Circuit, keep: Iterable[int], segment_size: int = 3) -> Circuit:
    """Keep only the ops of the given segments; measurements are always kept.

    Kept gates are emitted in (moment, within-moment) order, followed by every
    measurement in its original order.
    """
    segments = segments_of(circuit, segment_size)
    keep = set(keep)
    bad = [k for k in keep if not 0 <= k < len(segments)]
    if bad:
        raise InvalidArgument(f"segment index out of range: {sorted(bad)}")
    ops = [op for seg in segments if seg.index in keep
           for op in seg.ops if op.kind is not Gate.MEASURE]
    ops += [op for op in circuit.ops if op.kind is Gate.MEASURE]
    return circuit.replace_ops(ops)


# -- serialization -----------------------------------------------------------

_HEADER = re.compile(r"^backend:\s*(\S+?)\s*;\s*qubits:\s*(\d+)\s*;$")
_OP = re.compile(r"^([A-Za-z_]+)\s*(?:\(\s*([^)]*)\))?\s+(q\d+(?:\s*,\s*q\d+)*)\s*;$")


def serialize_circuit(circuit: Circuit) -> str:
    lines = [f"backend: {circuit.backend_id}; qubits: {circuit.num_physical_qubits};"]
    lines += [str(op) for op in circuit.ops]
    return "\n".join(lines) + "\n"


def parse_circuit(text: str) -> Circuit:
    header = None
    ops = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if header is None:
            m = _HEADER.match(line)
            if not m:
                raise CircuitParseError("expected header 'backend: <id>; qubits: <n>;'", lineno)
            header = (m.group(1), int(m.group(2)))
            continue
        m = _OP.match(line)
        if not m:
            raise CircuitParseError(f"malformed operation {line!r}", lineno)
        name, angle_text, qubit_text = m.groups()
        kind = Gate.parse(name)
        qubits = tuple(int(t.strip()[1:]) for t in qubit_text.split(","))
        angle = None
        if angle_text is not None:
            try:
                angle = float(angle_text)
            except ValueError:
                raise CircuitParseError(f"bad angle {angle_text!r}", lineno) from None
            if not math.isfinite(angle):
                raise CircuitParseError(f"non-finite angle {angle_text!r}", lineno)
        try:
            ops.append(Operation(kind, qubits, angle))
        except InvalidArgument as exc:
            raise CircuitParseError(str(exc), lineno) from None
    if header is None:
        raise CircuitParseError("missing header", 1)
    try:
        return Circuit(header[0], header[1], tuple(ops))
    except InvalidArgument as exc:
        raise CircuitParseError(str(exc)) from None


def circuit_to_dict(circuit: Circuit) -> dict:
    ops = []
    for op in circuit.ops:
        d = {"kind": op.kind.value, "qubits": list(op.qubits)}
        if op.angle is not None:
            d["angle"] = op.angle
        ops.append(d)
    return {
        "backend_id": circuit.backend_id,
        "num_physical_qubits": circuit.num_physical_qubits,
        "ops": ops,
    }


def circuit_from_dict(data: dict) -> Circuit:
    try:
        ops = tuple(
            Operation(Gate.parse(d["kind"]), tuple(d["qubits"]), d.get("angle"))
            for d in data["ops"]
        )
        return Circuit(str(data["backend_id"]), int(data["num_physical_qubits"]), ops)
    except (KeyError, TypeError) as exc:
        raise CircuitParseError(f"malformed circuit JSON: {exc}") from None


def circuit_to_json(circuit: Circuit) -> str:
    return json.dumps(circuit_to_dict(circuit), sort_keys=True)


def circuit_from_json(text: str) -> Circuit:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CircuitParseError(f"invalid JSON: {exc}", exc.lineno) from None
    return circuit_from_dict(data)


def load_circuit(path) -> Circuit:
    from pathlib import Path

    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        return circuit_from_json(text)
    return parse_circuit(text)


def dump_circuit(circuit: Circuit, path) -> None:
    from pathlib import Path

    path = Path(path)
    if path.suffix == ".json":
        path.write_text(circuit_to_json(circuit) + "\n")
    else:
        path.write_text(serialize_circuit(circuit))
