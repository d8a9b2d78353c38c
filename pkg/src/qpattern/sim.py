"""Ideal statevector simulation, noisy trajectory sampling and distribution metrics.

Noisy sampling runs one Monte Carlo trajectory per shot. After every gate the
trajectory receives a depolarizing Kraus draw sized by the gate arity and an
independent thermal-relaxation draw per qubit for the gate duration; readout
flips are applied classically to the measured bits. Bitstrings list the first
measured qubit as the most significant bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .circuit import Circuit, Gate
from .errors import CapacityError, InvalidArgument
from .kernels import get_kernel

MAX_QUBITS = 12
MAX_UNITARY_QUBITS = 6
CHUNK = 1024

SQRT_X = 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]])
PAULI = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def rz_matrix(theta: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def gate_matrix(op) -> np.ndarray:
    if op.kind is Gate.RZ:
        return rz_matrix(op.angle)
    if op.kind is Gate.SX:
        return SQRT_X
    if op.kind is Gate.X:
        return PAULI[1]
    if op.kind is Gate.CZ:
        return np.diag([1, 1, 1, -1]).astype(complex)
    raise InvalidArgument(f"{op.kind.value} has no unitary")


# -- distributions -----------------------------------------------------------

@dataclass(frozen=True)
class Distribution:
    qubits: tuple[int, ...]
    probs: Mapping[str, float]
    shots: int | None = None
    counts: Mapping[str, int] | None = field(default=None, compare=False)

    @classmethod
    def from_counts(cls, qubits, counts: Mapping[str, int]) -> "Distribution":
        shots = sum(counts.values())
        counts = {k: int(v) for k, v in sorted(counts.items()) if v}
        return cls(tuple(qubits), {k: v / shots for k, v in counts.items()}, shots, counts)

    def to_dict(self) -> dict:
        d = {"qubits": list(self.qubits), "probs": dict(sorted(self.probs.items()))}
        if self.shots is not None:
            d["shots"] = self.shots
        return d


def tvd(p: Distribution, q: Distribution) -> float:
    """Total variation distance: half the L1 distance over the union of supports."""
    if tuple(p.qubits) != tuple(q.qubits):
        raise InvalidArgument(f"measured qubits differ: {p.qubits} vs {q.qubits}")
    keys = set(p.probs) | set(q.probs)
    return 0.5 * math.fsum(abs(p.probs.get(k, 0.0) - q.probs.get(k, 0.0)) for k in sorted(keys))


# -- noise model -------------------------------------------------------------

DEFAULT_DURATIONS = {"rz": 0.0, "sx": 32.0, "x": 32.0, "cz": 68.0, "measure": 1000.0}


@dataclass(frozen=True)
class GateNoise:
    p: float = 0.0
    dur: float = 0.0


@dataclass(frozen=True)
class QubitNoise:
    t1: float | None = None  # None: no relaxation
    t2: float | None = None
    ro01: float = 0.0  # P(read 1 | state 0)
    ro10: float = 0.0  # P(read 0 | state 1)


@dataclass(frozen=True)
class NoiseModel:
    gates: Mapping[str, GateNoise]
    qubits: Mapping[int, QubitNoise]

    def __post_init__(self):
        gates = {Gate.parse(k).value: v for k, v in self.gates.items()}
        for name in DEFAULT_DURATIONS:
            gates.setdefault(name, GateNoise(0.0, DEFAULT_DURATIONS[name]))
        object.__setattr__(self, "gates", gates)
        object.__setattr__(self, "qubits", {int(k): v for k, v in self.qubits.items()})
        for name, g in gates.items():
            if not 0.0 <= g.p <= 1.0:
                raise InvalidArgument(f"depolarizing strength of {name} outside [0, 1]")
            if name == "rz" and g.dur != 0.0:
                raise InvalidArgument("rz is virtual and must have zero duration")
            if name != "rz" and not g.dur > 0.0:
                raise InvalidArgument(f"duration of {name} must be positive")
        for q, qn in self.qubits.items():
            for label in ("ro01", "ro10"):
                if not 0.0 <= getattr(qn, label) <= 1.0:
                    raise InvalidArgument(f"q{q}: {label} outside [0, 1]")
            for label in ("t1", "t2"):
                v = getattr(qn, label)
                if v is not None and not v > 0.0:
                    raise InvalidArgument(f"q{q}: {label} must be positive")
            if qn.t2 is not None and qn.t1 is not None and qn.t2 > 2.0 * qn.t1 * (1 + 1e-12):
                raise InvalidArgument(f"q{q}: T2 exceeds 2*T1")
            if qn.t2 is not None and qn.t1 is None:
                raise InvalidArgument(f"q{q}: T2 given without T1")

    def qubit(self, q: int) -> QubitNoise:
        try:
            return self.qubits[q]
        except KeyError:
            raise InvalidArgument(f"noise model has no calibration for q{q}") from None

    def to_dict(self) -> dict:
        gates = {}
        for name, g in sorted(self.gates.items()):
            gates[name] = {"dur": g.dur} if name == "measure" else {"p": g.p, "dur": g.dur}
        qubits = {
            str(q): {"t1": qn.t1, "t2": qn.t2, "ro01": qn.ro01, "ro10": qn.ro10}
            for q, qn in sorted(self.qubits.items())
        }
        return {"gates": gates, "qubits": qubits}

    @classmethod
    def from_dict(cls, data: Mapping) -> "NoiseModel":
        try:
            gates = {k: GateNoise(float(v.get("p", 0.0)), float(v.get("dur", DEFAULT_DURATIONS.get(k, 0.0))))
                     for k, v in data["gates"].items()}
            qubits = {int(k): QubitNoise(v.get("t1"), v.get("t2"), float(v.get("ro01", 0.0)),
                                         float(v.get("ro10", 0.0)))
                      for k, v in data["qubits"].items()}
        except (KeyError, AttributeError, TypeError, ValueError) as exc:
            raise InvalidArgument(f"malformed noise model: {exc}") from None
        return cls(gates, qubits)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "NoiseModel":
        return cls.from_dict(json.loads(text))


def default_noise_model(qubits: Sequence[int], *, sx=2e-4, x=2e-4, cz=2.5e-3,
                        t1=250_000.0, t2=200_000.0, ro01=0.005, ro10=0.01) -> NoiseModel:
    """Heron-like calibration in nanosecond time units."""
    gates = {
        "rz": GateNoise(0.0, 0.0),
        "sx": GateNoise(sx, DEFAULT_DURATIONS["sx"]),
        "x": GateNoise(x, DEFAULT_DURATIONS["x"]),
        "cz": GateNoise(cz, DEFAULT_DURATIONS["cz"]),
        "measure": GateNoise(0.0, DEFAULT_DURATIONS["measure"]),
    }
    return NoiseModel(gates, {q: QubitNoise(t1, t2, ro01, ro10) for q in qubits})


def zero_noise_model(qubits: Sequence[int]) -> NoiseModel:
    return NoiseModel({}, {q: QubitNoise() for q in qubits})


def relaxation_params(qn: QubitNoise, duration: float) -> tuple[float, float]:
    """(amplitude-damping gamma, extra phase-flip probability) for one interval."""
    if duration <= 0.0 or qn.t1 is None:
        return 0.0, 0.0
    gamma = -math.expm1(-duration / qn.t1)
    if qn.t2 is None:
        return gamma, 0.0
    # amplitude damping already decays coherences by exp(-d / 2T1)
    residual = math.exp(-duration / qn.t2 + duration / (2.0 * qn.t1))
    return gamma, max(0.0, 0.5 * (1.0 - residual))


# -- ideal simulation --------------------------------------------------------

def _local_index(circuit: Circuit) -> dict[int, int]:
    return {q: i for i, q in enumerate(sorted(circuit.used_qubits))}


def _apply(state: np.ndarray, mat: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    k = len(axes)
    tensor = mat.reshape((2,) * (2 * k))
    state = np.tensordot(tensor, state, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(state, list(range(k)), list(axes))


def ideal_statevector(circuit: Circuit) -> tuple[np.ndarray, dict[int, int]]:
    local = _local_index(circuit)
    n = len(local)
    if n > MAX_QUBITS:
        raise CapacityError(f"{n} qubits exceed the simulator capacity of {MAX_QUBITS}")
    state = np.zeros((2,) * n, dtype=complex)
    state[(0,) * n] = 1.0
    for op in circuit.ops:
        if op.kind is Gate.MEASURE:
            continue
        state = _apply(state, gate_matrix(op), [local[q] for q in op.qubits])
    return state, local


def ideal_distribution(circuit: Circuit) -> Distribution:
    state, local = ideal_statevector(circuit)
    measured = circuit.measured_qubits
    probs = np.abs(state) ** 2
    n = len(local)
    keep = [local[q] for q in measured]
    others = tuple(a for a in range(n) if a not in keep)
    marginal = probs.sum(axis=others) if others else probs
    # remaining axes are in ascending local order; reorder to measurement order
    order = sorted(keep)
    marginal = np.transpose(marginal, [order.index(a) for a in keep]) if keep else marginal
    flat = np.asarray(marginal).reshape(-1)
    k = len(measured)
    out = {}
    for idx, p in enumerate(flat):
        if p > 1e-15:
            out[format(idx, f"0{k}b") if k else ""] = float(p)
    total = math.fsum(out.values())
    return Distribution(tuple(measured), {key: v / total for key, v in out.items()})


def ideal_unitary(circuit: Circuit) -> np.ndarray:
    if any(op.kind is Gate.MEASURE for op in circuit.ops):
        raise InvalidArgument("ideal_unitary requires a measurement-free circuit")
    local = _local_index(circuit)
    n = len(local)
    if n > MAX_UNITARY_QUBITS:
        raise CapacityError(f"{n} qubits exceed the unitary capacity of {MAX_UNITARY_QUBITS}")
    dim = 1 << n
    u = np.eye(dim, dtype=complex).reshape((2,) * n + (dim,))
    for op in circuit.ops:
        u = _apply(u, gate_matrix(op), [local[q] for q in op.qubits])
    return u.reshape(dim, dim)


def equal_up_to_phase(a: np.ndarray, b: np.ndarray, atol: float = 1e-9) -> bool:
    if a.shape != b.shape:
        return False
    idx = np.unravel_index(np.argmax(np.abs(b)), b.shape)
    if abs(b[idx]) < atol:
        return bool(np.allclose(a, b, atol=atol))
    phase = a[idx] / b[idx]
    if abs(abs(phase) - 1.0) > atol:
        return False
    return bool(np.max(np.abs(a - phase * b)) < atol)


# -- noisy sampling ----------------------------------------------------------

OP_U1, OP_CZ, OP_DEP1, OP_DEP2, OP_AMPD, OP_DEPH = range(6)


@dataclass
class Program:
    """Flat instruction list executed by the trajectory kernels."""

    n_qubits: int
    qubits: tuple[int, ...]  # measured physical qubits, in order
    opcode: list = field(default_factory=list)
    qa: list = field(default_factory=list)
    qb: list = field(default_factory=list)
    param: list = field(default_factory=list)
    midx: list = field(default_factory=list)
    mats: list = field(default_factory=lambda: [m for m in PAULI])
    meas: list = field(default_factory=list)
    ro01: list = field(default_factory=list)
    ro10: list = field(default_factory=list)
    n_noise: int = 0

    def emit(self, opcode, a=0, b=0, param=0.0, mat=0):
        self.opcode.append(opcode)
        self.qa.append(a)
        self.qb.append(b)
        self.param.append(param)
        self.midx.append(mat)
        if opcode in (OP_DEP1, OP_DEP2, OP_AMPD, OP_DEPH):
            self.n_noise += 1

    def depolarize(self, local_qubits, p):
        if p <= 0.0:
            return
        if len(local_qubits) == 1:
            self.emit(OP_DEP1, local_qubits[0], 0, p)
        else:
            self.emit(OP_DEP2, local_qubits[0], local_qubits[1], p)

    def relax(self, a, qn: QubitNoise, duration: float):
        gamma, pz = relaxation_params(qn, duration)
        if gamma > 0.0:
            self.emit(OP_AMPD, a, 0, gamma)
        if pz > 0.0:
            self.emit(OP_DEPH, a, 0, pz)

    @property
    def n_draws(self) -> int:
        return self.n_noise + 1 + len(self.meas)

    def arrays(self):
        mats = np.array(self.mats, dtype=complex)
        return (
            np.asarray(self.opcode, dtype=np.int32),
            np.asarray(self.qa, dtype=np.int32),
            np.asarray(self.qb, dtype=np.int32),
            np.asarray(self.param, dtype=np.float64),
            np.asarray(self.midx, dtype=np.int32),
            np.ascontiguousarray(mats.real),
            np.ascontiguousarray(mats.imag),
            int(self.n_qubits),
            np.asarray(self.meas, dtype=np.int32),
            np.asarray(self.ro01, dtype=np.float64),
            np.asarray(self.ro10, dtype=np.float64),
        )


def compile_program(circuit: Circuit, nm: NoiseModel,
                    extra: Mapping[int, Sequence[tuple[tuple[int, ...], float]]] | None = None) -> Program:
    """Lower a circuit plus noise model to kernel instructions.

    ``extra`` maps an op position to additional depolarizing channels
    ``(physical qubits, strength)`` applied right after that op.
    """
    local = _local_index(circuit)
    if len(local) > MAX_QUBITS:
        raise CapacityError(f"{len(local)} qubits exceed the simulator capacity of {MAX_QUBITS}")
    prog = Program(len(local), circuit.measured_qubits)
    sx_idx = len(prog.mats)
    prog.mats.append(SQRT_X)
    rz_idx: dict[float, int] = {}
    extra = extra or {}
    for pos, op in enumerate(circuit.ops):
        qs = [local[q] for q in op.qubits]
        g = nm.gates[op.kind.value]
        if op.kind is Gate.MEASURE:
            prog.relax(qs[0], nm.qubit(op.qubits[0]), g.dur)
            qn = nm.qubit(op.qubits[0])
            prog.meas.append(qs[0])
            prog.ro01.append(qn.ro01)
            prog.ro10.append(qn.ro10)
        else:
            if op.kind is Gate.RZ:
                if op.angle not in rz_idx:
                    rz_idx[op.angle] = len(prog.mats)
                    prog.mats.append(rz_matrix(op.angle))
                prog.emit(OP_U1, qs[0], mat=rz_idx[op.angle])
            elif op.kind is Gate.SX:
                prog.emit(OP_U1, qs[0], mat=sx_idx)
            elif op.kind is Gate.X:
                prog.emit(OP_U1, qs[0], mat=1)
            else:
                prog.emit(OP_CZ, qs[0], qs[1])
            prog.depolarize(qs, g.p)
            for q, a in zip(op.qubits, qs):
                prog.relax(a, nm.qubit(q), g.dur)
        for qubits, p in extra.get(pos, ()):
            prog.depolarize([local[q] for q in qubits], p)
    return prog


def run_program(prog: Program, shots: int, seed: int, backend: str | None = None) -> Distribution:
    if shots < 1:
        raise InvalidArgument("shots must be >= 1")
    kernel = get_kernel(backend)
    arrays = prog.arrays()
    k = len(prog.meas)
    bins = np.zeros(1 << k, dtype=np.int64)
    for chunk, start in enumerate(range(0, shots, CHUNK)):
        size = min(CHUNK, shots - start)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, chunk])))
        uni = rng.random((size, prog.n_draws))
        outcomes = kernel(*arrays, uni)
        bins += np.bincount(outcomes, minlength=1 << k)
    counts = {format(i, f"0{k}b") if k else "": int(c) for i, c in enumerate(bins) if c}
    return Distribution.from_counts(prog.qubits, counts)


def noisy_sample(circuit: Circuit, nm: NoiseModel, shots: int, seed: int,
                 backend: str | None = None) -> Distribution:
    if shots < 1:
        raise InvalidArgument("shots must be >= 1")
    return run_program(compile_program(circuit, nm), shots, seed, backend)


def scale_noise(nm: NoiseModel, **factors) -> NoiseModel:
    """Return a copy with gate depolarizing strengths multiplied per kind."""
    gates = dict(nm.gates)
    for name, f in factors.items():
        gates[name] = replace(gates[name], p=min(1.0, gates[name].p * f))
    return NoiseModel(gates, nm.qubits)
