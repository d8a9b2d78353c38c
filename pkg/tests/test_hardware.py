import statistics

import numpy as np
import pytest

from qpattern.circuit import Circuit, cz, measure, rz, sx, x
from qpattern.errors import InvalidArgument
from qpattern.hardware import (FEZ_RULE, MARRAKESH_RULE, BackendSpec, ContextRule, HardwareExecutor,
                               _jitter_calibration, execute, export_calibration, load_backend, open_window, preset,
                               random_transient_rule, rule_extra_channels)
from qpattern.lowering import CouplingGraph
from qpattern.sim import default_noise_model, ideal_distribution, noisy_sample, tvd


def fez_circuit(repeats=1):
    ops = []
    for _ in range(repeats):
        ops += [sx(107), rz(0.3, 107), sx(108), cz(107, 108)]
    ops += [measure(107), measure(108)]
    return Circuit("ibm_fez", 156, tuple(ops))


def test_rule_validation():
    with pytest.raises(InvalidArgument):
        ContextRule(FEZ_RULE, (107, 108), 0.0)
    with pytest.raises(InvalidArgument):
        ContextRule(FEZ_RULE, (107, 108), 1.5)
    with pytest.raises(InvalidArgument):
        ContextRule(FEZ_RULE, (107,), 0.1)


def test_rule_roundtrip():
    rule = ContextRule(MARRAKESH_RULE, (7, 8), 0.05)
    assert ContextRule.from_dict(rule.to_dict()) == rule


def test_rule_channels_land_after_last_op():
    rule = ContextRule(FEZ_RULE, (107, 108), 0.05)
    c = fez_circuit(2)
    assert rule_extra_channels(c, [rule]) == {3: [((107, 108), 0.05)], 7: [((107, 108), 0.05)]}


def test_spec_json_roundtrip(tmp_path):
    spec = preset("fez", transient_prob=0.2)
    p = tmp_path / "fez.json"
    p.write_text(spec.to_json())
    again = load_backend(p)
    assert again.to_dict() == spec.to_dict()
    assert again.hidden_rules == spec.hidden_rules


def test_spec_rejects_rule_on_unknown_qubit():
    nm = default_noise_model([0, 1])
    with pytest.raises(InvalidArgument):
        BackendSpec("b", 4, CouplingGraph([(0, 1)]), nm, (ContextRule(FEZ_RULE, (2, 3), 0.1),))


def test_malformed_spec():
    with pytest.raises(InvalidArgument):
        BackendSpec.from_dict({"backend_id": "x"})


def test_presets():
    assert [len(preset(n).hidden_rules) for n in ("fez", "marrakesh", "kingston")] == [1, 1, 0]
    assert preset("fez").backend_id == "ibm_fez"
    with pytest.raises(InvalidArgument):
        preset("osaka")


def test_windows_are_reproducible_and_distinct():
    spec = preset("fez")
    a, b = open_window(spec, 3, 42), open_window(spec, 3, 42)
    assert a == b
    assert open_window(spec, 4, 42).realized_calibration != a.realized_calibration
    with pytest.raises(InvalidArgument):
        open_window(spec, -1, 0)


def test_jitter_is_mean_one():
    base = default_noise_model([0])
    rng = np.random.default_rng(0)
    draws = [_jitter_calibration(base, 0.3, rng).gates["cz"].p for _ in range(4000)]
    assert statistics.fmean(draws) / base.gates["cz"].p == pytest.approx(1.0, abs=0.03)
    assert _jitter_calibration(base, 0.0, rng) is base


def test_transient_rules():
    spec = preset("kingston", transient_prob=1.0)
    w = open_window(spec, 0, 1)
    assert len(w.realized_rules) == 1 and w.realized_rules[0].transient
    rng = np.random.default_rng(0)
    for _ in range(50):
        r = random_transient_rule(spec.graph, 0.05, rng)
        assert len(r.template) == 2
        assert all(q in spec.graph.qubits for q in r.binding)


def test_rule_adds_excess_error():
    spec = preset("fez", sigma_mult=0.0)
    clean = preset("kingston", sigma_mult=0.0)
    c = fez_circuit(3)
    w = open_window(spec, 0, 0)
    hw = execute(c, w, 20000, 1)
    model = noisy_sample(c, export_calibration(w), 20000, 2)
    ideal = ideal_distribution(c)
    assert tvd(ideal, hw) > tvd(ideal, model) + 0.03
    # without the rule the hardware is the model
    wk = open_window(clean.with_rules(()), 0, 0)
    assert not rule_extra_channels(c, wk.realized_rules)


def test_executor_hides_rules():
    w = open_window(preset("fez"), 0, 0)
    ex = HardwareExecutor(w)
    assert not hasattr(ex, "realized_rules")
    assert ex.calibration() == w.realized_calibration
    assert ex(fez_circuit(), 100, 0).shots == 100


def test_execute_rejects_unknown_qubits():
    w = open_window(preset("fez"), 0, 0)
    with pytest.raises(InvalidArgument):
        execute(Circuit("ibm_fez", 200, (x(170), measure(170))), w, 10, 0)
