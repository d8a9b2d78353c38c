"""Occurrence matching of gate templates on per-qubit timelines.

A template is an ordered list of elements ``(kind, roles)`` where ``roles``
index into a concrete qubit binding. An occurrence is a set of ops, one per
element, such that on every bound qubit the ops touching it are consecutive
on that qubit's timeline and appear in template order. Ops on other qubits
may interleave freely.

The hardware mock fires its hidden rules with this matcher and the pattern
scanner uses it too, so both always agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .circuit import Circuit, Gate, Operation
from .errors import InvalidArgument


@dataclass(frozen=True)
class TemplateElement:
    kind: Gate
    roles: tuple[int, ...]
    angle: float | None = None  # only consulted when matching angles

    def __post_init__(self):
        kind = Gate.parse(self.kind) if isinstance(self.kind, str) else Gate(self.kind)
        object.__setattr__(self, "kind", kind)
        roles = tuple(int(r) for r in self.roles)
        if kind is Gate.CZ:
            roles = tuple(sorted(roles))
        object.__setattr__(self, "roles", roles)
        if len(roles) != kind.arity or len(set(roles)) != len(roles):
            raise InvalidArgument(f"template element {kind.value} needs {kind.arity} distinct roles")
        if kind is Gate.MEASURE:
            raise InvalidArgument("templates cannot contain measurements")
        if self.angle is not None:
            if kind is not Gate.RZ:
                raise InvalidArgument("only rz elements carry angles")
            object.__setattr__(self, "angle", float(self.angle))

    def stripped(self) -> "TemplateElement":
        return TemplateElement(self.kind, self.roles)

    def to_json(self) -> list:
        out = [self.kind.value, list(self.roles)]
        if self.angle is not None:
            out.append(self.angle)
        return out

    @classmethod
    def from_json(cls, item) -> "TemplateElement":
        return cls(item[0], tuple(item[1]), item[2] if len(item) > 2 else None)


Template = tuple[TemplateElement, ...]


def make_template(elements: Iterable) -> Template:
    out = []
    for e in elements:
        out.append(e if isinstance(e, TemplateElement) else TemplateElement(*e))
    return tuple(out)


def validate_template(template: Template, binding: Sequence[int]) -> None:
    if len(template) < 2:
        raise InvalidArgument("templates need at least 2 elements")
    n = len(binding)
    if len(set(binding)) != n:
        raise InvalidArgument(f"binding has repeated qubits: {tuple(binding)}")
    used = set()
    for e in template:
        if any(not 0 <= r < n for r in e.roles):
            raise InvalidArgument(f"role out of range for binding of {n} qubits")
        used.update(e.roles)
    if used != set(range(n)):
        raise InvalidArgument("every bound qubit must appear in the template")
    # connectivity: roles linked through multi-qubit elements
    seen, frontier = {template[0].roles[0]}, [template[0].roles[0]]
    while frontier:
        r = frontier.pop()
        for e in template:
            if r in e.roles:
                for s in e.roles:
                    if s not in seen:
                        seen.add(s)
                        frontier.append(s)
    if seen != used:
        raise InvalidArgument("template qubits are not connected by its gates")


def template_from_ops(ops: Sequence[Operation], keep_angles: bool = False) -> tuple[Template, tuple[int, ...]]:
    """Abstract concrete ops into (template, binding); binding in first-touch order."""
    binding: list[int] = []
    for op in ops:
        for q in op.qubits:
            if q not in binding:
                binding.append(q)
    role = {q: i for i, q in enumerate(binding)}
    template = tuple(
        TemplateElement(op.kind, tuple(role[q] for q in op.qubits), op.angle if keep_angles else None)
        for op in ops
    )
    return template, tuple(binding)


class Timelines:
    """Per-qubit op positions of a circuit."""

    def __init__(self, ops: Sequence[Operation]):
        self.ops = ops
        self.line: dict[int, list[int]] = {}
        self.index: dict[tuple[int, int], int] = {}
        for pos, op in enumerate(ops):
            for q in op.qubits:
                line = self.line.setdefault(q, [])
                self.index[(q, pos)] = len(line)
                line.append(pos)

    def at(self, q: int, i: int) -> int | None:
        line = self.line.get(q)
        if line is None or not 0 <= i < len(line):
            return None
        return line[i]


def _element_matches(e: TemplateElement, op: Operation, binding, angle_tol) -> bool:
    if op.kind is not e.kind:
        return False
    want = tuple(binding[r] for r in e.roles)
    got = op.qubits
    if e.kind is Gate.CZ:
        if set(want) != set(got):
            return False
    elif want != got:
        return False
    if angle_tol is not None and e.angle is not None:
        d = math.remainder(op.angle - e.angle, 4 * math.pi)
        if abs(d) > angle_tol:
            return False
    return True


def find_occurrences(ops: Sequence[Operation], template: Template, binding: Sequence[int],
                     angle_tol: float | None = None, timelines: Timelines | None = None) -> list[tuple[int, ...]]:
    """All occurrences as tuples of op positions, one per template element.

    Sorted by the position of the earliest matched op.
    """
    binding = tuple(binding)
    tl = timelines or Timelines(ops)
    # rank of each element among the elements touching each of its qubits
    per_qubit: dict[int, list[int]] = {}
    for ei, e in enumerate(template):
        for r in e.roles:
            per_qubit.setdefault(binding[r], []).append(ei)
    rank = {(q, ei): k for q, elems in per_qubit.items() for k, ei in enumerate(elems)}
    first = template[0]
    anchor_q = binding[first.roles[0]]
    found = []
    for pos in tl.line.get(anchor_q, []):
        if not _element_matches(first, ops[pos], binding, angle_tol):
            continue
        assigned: dict[int, int] = {0: pos}
        frontier = [0]
        ok = True
        while frontier and ok:
            ei = frontier.pop()
            p = assigned[ei]
            for r in template[ei].roles:
                q = binding[r]
                base = tl.index[(q, p)] - rank[(q, ei)]
                for k, ej in enumerate(per_qubit[q]):
                    pj = tl.at(q, base + k)
                    if pj is None:
                        ok = False
                        break
                    if ej in assigned:
                        if assigned[ej] != pj:
                            ok = False
                            break
                        continue
                    if not _element_matches(template[ej], ops[pj], binding, angle_tol):
                        ok = False
                        break
                    assigned[ej] = pj
                    frontier.append(ej)
                if not ok:
                    break
        if ok and len(assigned) == len(template) and len(set(assigned.values())) == len(template):
            found.append(tuple(assigned[i] for i in range(len(template))))
    found.sort(key=lambda occ: (min(occ), occ))
    return found


def count_occurrences(circuit: Circuit, template: Template, binding: Sequence[int], angle_tol=None) -> int:
    return len(find_occurrences(circuit.ops, template, binding, angle_tol))
