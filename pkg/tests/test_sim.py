import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qpattern import kernels
from qpattern.circuit import Circuit, cz, measure, rz, sx, x
from qpattern.errors import CapacityError, InvalidArgument
from qpattern.sim import (PAULI, Distribution, GateNoise, NoiseModel, QubitNoise, compile_program,
                          default_noise_model, gate_matrix, ideal_distribution, ideal_unitary, noisy_sample,
                          relaxation_params, run_program, scale_noise, tvd, zero_noise_model)


def dist(probs, qubits=(0,)):
    return Distribution(tuple(qubits), probs)


# -- tvd ---------------------------------------------------------------------

def test_tvd_examples():
    assert tvd(dist({"0": 1.0}), dist({"1": 1.0})) == 1.0
    assert tvd(dist({"0": 0.5, "1": 0.5}), dist({"0": 0.5, "1": 0.5})) == 0.0
    assert tvd(dist({"0": 0.7, "1": 0.3}), dist({"0": 0.4, "1": 0.6})) == pytest.approx(0.3)


def test_tvd_requires_same_qubits():
    with pytest.raises(InvalidArgument):
        tvd(dist({"0": 1.0}, (0,)), dist({"0": 1.0}, (1,)))


probs3 = st.lists(st.floats(0, 1), min_size=4, max_size=4).filter(lambda v: sum(v) > 1e-6).map(
    lambda v: {format(i, "02b"): p / sum(v) for i, p in enumerate(v)})


@settings(max_examples=200)
@given(probs3, probs3, probs3)
def test_tvd_is_a_metric(a, b, c):
    p, q, r = (dist(d, (0, 1)) for d in (a, b, c))
    assert 0.0 <= tvd(p, q) <= 1.0 + 1e-12
    assert tvd(p, q) == pytest.approx(tvd(q, p))
    assert tvd(p, p) == 0.0
    assert tvd(p, r) <= tvd(p, q) + tvd(q, r) + 1e-12


# -- ideal simulation --------------------------------------------------------

def test_bit_order_first_measured_is_msb():
    c = Circuit("m", 3, (x(2), measure(2), measure(0)))
    assert ideal_distribution(c).probs == {"10": 1.0}
    c = Circuit("m", 3, (x(2), measure(0), measure(2)))
    assert ideal_distribution(c).probs == {"01": 1.0}


def test_sx_squared_is_x():
    c = Circuit("m", 1, (sx(0), sx(0)))
    assert np.allclose(ideal_unitary(c), gate_matrix(x(0)))


def test_bell_like_distribution():
    c = Circuit("m", 2, (sx(0), sx(1), cz(0, 1), sx(1), measure(0), measure(1)))
    d = ideal_distribution(c)
    assert sum(d.probs.values()) == pytest.approx(1.0)
    assert set(d.probs) <= {"00", "01", "10", "11"}


def test_capacity_limits():
    wide = Circuit("m", 14, tuple(sx(q) for q in range(13)))
    with pytest.raises(CapacityError):
        ideal_distribution(wide)
    with pytest.raises(CapacityError):
        ideal_unitary(Circuit("m", 8, tuple(sx(q) for q in range(7))))
    with pytest.raises(InvalidArgument):
        ideal_unitary(Circuit("m", 1, (measure(0),)))


# -- noise model -------------------------------------------------------------

def test_noise_model_validation():
    with pytest.raises(InvalidArgument):
        NoiseModel({"sx": GateNoise(1.5, 32.0)}, {})
    with pytest.raises(InvalidArgument):
        NoiseModel({"rz": GateNoise(0.0, 5.0)}, {})
    with pytest.raises(InvalidArgument):
        NoiseModel({}, {0: QubitNoise(100.0, 250.0)})
    with pytest.raises(InvalidArgument):
        NoiseModel({}, {0: QubitNoise(None, 50.0)})
    with pytest.raises(InvalidArgument):
        default_noise_model([0]).qubit(3)


def test_noise_model_json_roundtrip():
    nm = default_noise_model(range(3))
    assert NoiseModel.from_json(nm.to_json()) == nm
    with pytest.raises(InvalidArgument):
        NoiseModel.from_dict({"gates": {}})


def test_relaxation_params():
    qn = QubitNoise(100.0, 120.0)
    gamma, pz = relaxation_params(qn, 10.0)
    assert gamma == pytest.approx(1 - math.exp(-0.1))
    assert pz == pytest.approx((1 - math.exp(-10 / 120 + 10 / 200)) / 2)
    assert relaxation_params(qn, 0.0) == (0.0, 0.0)
    assert relaxation_params(QubitNoise(), 50.0) == (0.0, 0.0)


def test_scale_noise():
    nm = default_noise_model([0])
    assert scale_noise(nm, cz=2.0).gates["cz"].p == pytest.approx(2 * nm.gates["cz"].p)


# -- noisy sampling against an exact density-matrix oracle ---------------------

def _embed(mat, axes, n):
    """Full 2^n operator for ``mat`` on local ``axes`` (axis 0 is the MSB)."""
    k = len(axes)
    dim = 1 << n
    out = np.zeros((dim, dim), dtype=complex)
    for col in range(dim):
        bits = [(col >> (n - 1 - a)) & 1 for a in range(n)]
        sub_col = sum(bits[a] << (k - 1 - i) for i, a in enumerate(axes))
        for sub_row in range(1 << k):
            amp = mat[sub_row, sub_col]
            if amp == 0:
                continue
            new = list(bits)
            for i, a in enumerate(axes):
                new[a] = (sub_row >> (k - 1 - i)) & 1
            out[sum(b << (n - 1 - a) for a, b in enumerate(new)), col] += amp
    return out


def _depolarize(rho, axes, p, n):
    paulis = [np.kron(a, b) for a, b in itertools.product(PAULI, repeat=len(axes))] if len(axes) == 2 else PAULI
    mixed = sum(_embed(P, axes, n) @ rho @ _embed(P, axes, n).conj().T for P in paulis) / len(paulis)
    return (1 - p) * rho + p * mixed


def _relax(rho, a, qn, dur, n):
    gamma, pz = relaxation_params(qn, dur)
    if gamma:
        k0 = _embed(np.array([[1, 0], [0, math.sqrt(1 - gamma)]]), [a], n)
        k1 = _embed(np.array([[0, math.sqrt(gamma)], [0, 0]]), [a], n)
        rho = k0 @ rho @ k0.conj().T + k1 @ rho @ k1.conj().T
    if pz:
        z = _embed(PAULI[3], [a], n)
        rho = (1 - pz) * rho + pz * z @ rho @ z
    return rho


def exact_noisy_distribution(circuit, nm):
    local = {q: i for i, q in enumerate(sorted(circuit.used_qubits))}
    n = len(local)
    rho = np.zeros((1 << n, 1 << n), dtype=complex)
    rho[0, 0] = 1
    for op in circuit.ops:
        axes = [local[q] for q in op.qubits]
        g = nm.gates[op.kind.value]
        if op.kind.value == "measure":
            rho = _relax(rho, axes[0], nm.qubit(op.qubits[0]), g.dur, n)
            continue
        u = _embed(gate_matrix(op), axes, n)
        rho = u @ rho @ u.conj().T
        if g.p:
            rho = _depolarize(rho, axes, g.p, n)
        for q, a in zip(op.qubits, axes):
            rho = _relax(rho, a, nm.qubit(q), g.dur, n)
    diag = np.real(np.diag(rho))
    meas = circuit.measured_qubits
    out = {}
    for idx, p in enumerate(diag):
        bits = [(idx >> (n - 1 - local[q])) & 1 for q in meas]
        # readout confusion, independent per qubit
        for flips in itertools.product((0, 1), repeat=len(meas)):
            w = p
            for q, b, f in zip(meas, bits, flips):
                qn = nm.qubit(q)
                e = qn.ro01 if b == 0 else qn.ro10
                w *= e if f else 1 - e
            key = "".join(str(b ^ f) for b, f in zip(bits, flips))
            out[key] = out.get(key, 0.0) + w
    return Distribution(tuple(meas), out)


def strong_noise(qubits):
    gates = {"sx": GateNoise(0.05, 40.0), "x": GateNoise(0.03, 40.0), "cz": GateNoise(0.1, 80.0)}
    return NoiseModel(gates, {q: QubitNoise(2000.0, 1500.0, 0.04, 0.07) for q in qubits})


CIRCUITS = [
    Circuit("m", 3, (sx(0), rz(0.7, 0), sx(1), cz(0, 1), x(2), cz(1, 2), sx(2), measure(0), measure(1), measure(2))),
    Circuit("m", 2, (x(0), x(1), cz(0, 1), measure(1), measure(0))),
    Circuit("m", 3, (sx(0), sx(0), rz(1.1, 1), sx(1), measure(2), measure(1), measure(0))),
]


@pytest.mark.parametrize("backend", sorted(kernels.BACKENDS))
@pytest.mark.parametrize("idx", range(len(CIRCUITS)))
def test_sampler_matches_density_matrix(backend, idx):
    c = CIRCUITS[idx]
    nm = strong_noise(c.used_qubits)
    exact = exact_noisy_distribution(c, nm)
    sample = noisy_sample(c, nm, 40000, seed=idx, backend=backend)
    # 8 outcomes at 40k shots: sampling TVD is about 0.005
    assert tvd(exact, sample) < 0.02


def test_extra_channel_equals_gate_depolarizing():
    c = Circuit("m", 2, (x(0), sx(1), cz(0, 1), sx(1), measure(0), measure(1)))
    quiet = zero_noise_model(c.used_qubits)
    sample = run_program(compile_program(c, quiet, {2: [((0, 1), 0.6)]}), 40000, 3)
    ref = exact_noisy_distribution(c, NoiseModel({"cz": GateNoise(0.6, 68.0)}, quiet.qubits))
    assert tvd(sample, ref) < 0.02
    assert tvd(ref, ideal_distribution(c)) > 0.2


def test_kernels_agree_bit_for_bit():
    if len(kernels.BACKENDS) < 2:
        pytest.skip("compiled kernel not built")
    c = CIRCUITS[0]
    nm = strong_noise(c.used_qubits)
    a = noisy_sample(c, nm, 5000, 11, backend="compiled")
    b = noisy_sample(c, nm, 5000, 11, backend="python")
    assert a.counts == b.counts


def test_same_seed_same_counts_and_seed_sensitivity():
    c = CIRCUITS[0]
    nm = strong_noise(c.used_qubits)
    assert noisy_sample(c, nm, 3000, 5).counts == noisy_sample(c, nm, 3000, 5).counts
    assert noisy_sample(c, nm, 3000, 5).counts != noisy_sample(c, nm, 3000, 6).counts


def test_zero_noise_reproduces_ideal_support():
    c = CIRCUITS[1]
    d = noisy_sample(c, zero_noise_model(c.used_qubits), 2000, 0)
    assert d.probs == ideal_distribution(c).probs == {"11": 1.0}


def test_readout_error_direction():
    c = Circuit("m", 1, (measure(0),))
    nm = NoiseModel({}, {0: QubitNoise(None, None, 0.2, 0.0)})
    d = noisy_sample(c, nm, 20000, 1)
    assert d.probs["1"] == pytest.approx(0.2, abs=0.015)
    c1 = Circuit("m", 1, (x(0), measure(0)))
    nm1 = NoiseModel({}, {0: QubitNoise(None, None, 0.0, 0.3)})
    assert noisy_sample(c1, nm1, 20000, 1).probs["0"] == pytest.approx(0.3, abs=0.015)


def test_shots_must_be_positive():
    with pytest.raises(InvalidArgument):
        noisy_sample(CIRCUITS[1], zero_noise_model([0, 1]), 0, 1)


def test_unknown_kernel():
    with pytest.raises(ValueError):
        kernels.get_kernel("gpu")
