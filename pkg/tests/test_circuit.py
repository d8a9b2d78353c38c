import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from qpattern.circuit import (Circuit, Gate, Operation, circuit_from_json, circuit_to_json, cz, dump_circuit,
                              group_segments, load_circuit, measure, moment_indices, num_moments, parse_circuit,
                              partition_into_moments, remove_segments, rz, segments_of, serialize_circuit, sx)
from qpattern.errors import CircuitParseError, InvalidArgument, UnsupportedGate


def brute_force_moments(ops):
    """Moment of each op by repeated relaxation of the dependency constraints."""
    m = [0] * len(ops)
    changed = True
    while changed:
        changed = False
        for j, b in enumerate(ops):
            for i in range(j):
                if set(ops[i].qubits) & set(b.qubits) and m[j] <= m[i]:
                    m[j] = m[i] + 1
                    changed = True
    return m


@st.composite
def random_ops(draw, n_qubits=4, max_ops=30):
    n = draw(st.integers(0, max_ops))
    ops = []
    for _ in range(n):
        kind = draw(st.sampled_from(["rz", "sx", "x", "cz"]))
        if kind == "cz":
            a, b = draw(st.lists(st.integers(0, n_qubits - 1), min_size=2, max_size=2, unique=True))
            ops.append(cz(a, b))
        elif kind == "rz":
            ops.append(rz(draw(st.floats(-math.pi, math.pi)), draw(st.integers(0, n_qubits - 1))))
        else:
            ops.append(Operation(Gate(kind), (draw(st.integers(0, n_qubits - 1)),)))
    return ops


def test_operation_validation():
    with pytest.raises(InvalidArgument):
        Operation(Gate.CZ, (1, 1))
    with pytest.raises(InvalidArgument):
        Operation(Gate.RZ, (0,))
    with pytest.raises(InvalidArgument):
        Operation(Gate.SX, (0,), 0.3)
    with pytest.raises(InvalidArgument):
        Operation(Gate.SX, (-1,))


def test_ids_follow_position_and_ignore_equality():
    c = Circuit("mock", 3, (sx(0), cz(0, 1)))
    assert [op.id for op in c.ops] == [0, 1]
    assert sx(0, id=5) == sx(0, id=9)


def test_no_gate_after_measurement():
    with pytest.raises(InvalidArgument):
        Circuit("mock", 2, (measure(0), sx(0)))


def test_qubit_outside_device():
    with pytest.raises(InvalidArgument):
        Circuit("mock", 2, (sx(2),))


def test_moments_known_example(small_circuit):
    assert moment_indices(small_circuit.ops) == [0, 0, 1, 0, 1, 2, 0, 2, 3, 3]
    assert num_moments(small_circuit) == 4
    moments = partition_into_moments(small_circuit)
    assert [len(m.ops) for m in moments] == [4, 2, 2, 2]


@settings(max_examples=200, deadline=None)
@given(random_ops())
def test_moments_match_brute_force(ops):
    assert moment_indices(ops) == brute_force_moments(ops)


@settings(max_examples=100, deadline=None)
@given(random_ops(), st.integers(1, 5))
def test_segments_partition_ops(ops, size):
    c = Circuit("mock", 4, tuple(ops))
    segs = segments_of(c, size)
    flat = [op.id for s in segs for op in s.ops]
    assert sorted(flat) == list(range(len(ops)))
    assert all(len(s.moment_indices) <= size for s in segs)
    assert len(segs) == math.ceil(num_moments(c) / size)


def test_group_segments_rejects_zero():
    with pytest.raises(InvalidArgument):
        group_segments([], 0)


def test_remove_segments_keeps_measurements(small_circuit):
    kept = remove_segments(small_circuit, [0], segment_size=2)
    kinds = [op.kind for op in kept.ops]
    assert kinds.count(Gate.MEASURE) == 3
    assert all(op.kind is not Gate.MEASURE for op in kept.ops[:-3])
    assert {op.id for op in kept.ops if op.kind is not Gate.MEASURE} == {0, 1, 2, 3, 4, 6}
    with pytest.raises(InvalidArgument):
        remove_segments(small_circuit, [7], 2)


def test_remove_all_segments_preserves_gate_multiset(small_circuit):
    full = remove_segments(small_circuit, range(len(segments_of(small_circuit, 1))), 1)
    assert sorted(op.signature() for op in full.ops) == sorted(op.signature() for op in small_circuit.ops)


def test_text_roundtrip(small_circuit):
    text = serialize_circuit(small_circuit)
    assert text.splitlines()[0] == "backend: mock; qubits: 4;"
    assert parse_circuit(text) == small_circuit


def test_json_roundtrip(small_circuit):
    assert circuit_from_json(circuit_to_json(small_circuit)) == small_circuit


@settings(max_examples=100, deadline=None)
@given(random_ops())
def test_roundtrip_property(ops):
    c = Circuit("dev", 4, tuple(ops))
    assert parse_circuit(serialize_circuit(c)) == c
    assert circuit_from_json(circuit_to_json(c)) == c


def test_parse_comments_and_case():
    c = parse_circuit("# header next\nbackend: b; qubits: 3;\nSX q0;  # trailing\n\nrz(-0.5) q1;\ncz q0, q2;\n")
    assert [op.kind for op in c.ops] == [Gate.SX, Gate.RZ, Gate.CZ]
    assert c.ops[1].angle == -0.5


@pytest.mark.parametrize("text, line", [
    ("sx q0;", 1),
    ("backend: b; qubits: 2;\nsx q0\n", 2),
    ("backend: b; qubits: 2;\nrz(abc) q0;\n", 2),
    ("backend: b; qubits: 2;\nrz(nan) q0;\n", 2),
    ("backend: b; qubits: 2;\ncz q0, q0;\n", 2),
])
def test_parse_errors_report_line(text, line):
    with pytest.raises(CircuitParseError) as exc:
        parse_circuit(text)
    assert exc.value.line == line


def test_unknown_gate():
    with pytest.raises(UnsupportedGate):
        parse_circuit("backend: b; qubits: 2;\nh q0;\n")


def test_malformed_json():
    with pytest.raises(CircuitParseError):
        circuit_from_json("{")
    with pytest.raises(CircuitParseError):
        circuit_from_json(json.dumps({"ops": []}))


def test_file_roundtrip(tmp_path, small_circuit):
    for name in ("c.txt", "c.json"):
        dump_circuit(small_circuit, tmp_path / name)
        assert load_circuit(tmp_path / name) == small_circuit


def test_fingerprint_stable(small_circuit):
    again = parse_circuit(serialize_circuit(small_circuit))
    assert again.fingerprint() == small_circuit.fingerprint()
    assert small_circuit.replace_ops(small_circuit.ops[1:]).fingerprint() != small_circuit.fingerprint()


def test_measured_qubits_order(small_circuit):
    assert small_circuit.measured_qubits == (0, 1, 2)
    assert small_circuit.used_qubits == frozenset({0, 1, 2, 3})
    assert small_circuit.gate_counts()["measure"] == 3
