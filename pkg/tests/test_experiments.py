import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qpattern.circuit import Gate, num_moments, segments_of
from qpattern.errors import InvalidArgument
from qpattern.experiments import (check_gadget, entry_from_rule, identity_gadget, injection_sites,
                                  injection_workload, scaling_circuits, scaling_experiment, splice)
from qpattern.hardware import ContextRule, preset
from qpattern.lowering import grover_circuit, lower_to_native, star_layout
from qpattern.patterns import PatternDB, scan
from qpattern.sim import ideal_distribution


@pytest.mark.parametrize("name", ["fez", "marrakesh"])
def test_preset_gadgets_are_identity(name):
    rule = preset(name).hidden_rules[0]
    assert check_gadget(rule)
    ops = identity_gadget(rule)
    assert ops[0].kind is Gate.CZ and ops[-1].kind is Gate.CZ


ELEMENT = st.one_of(
    st.tuples(st.sampled_from(["sx", "x", "rz"]), st.sampled_from([(0,), (1,)])),
    st.just(("cz", (0, 1))),
)


@settings(max_examples=60, deadline=None)
@given(st.lists(ELEMENT, min_size=1, max_size=5))
def test_random_gadgets_are_identity(elements):
    template = elements + [("cz", (0, 1))]
    assert check_gadget(ContextRule(template, (3, 4), 0.05))


@pytest.fixture(scope="module")
def workload():
    return injection_workload(preset("marrakesh"))


def test_injection_workload_shape(workload):
    segs = segments_of(workload.circuit, 6)
    assert len(segs) == 34
    rule = preset("marrakesh").hidden_rules[0]
    (occ,) = rule.occurrences(workload.circuit)
    assert occ == workload.occurrence
    owner = {i for i, s in enumerate(segs) for op in s.ops if op.id in {workload.circuit.ops[p].id for p in occ}}
    assert owner == {workload.culprit_segment}
    assert workload.moment_distance(workload.culprit_segment) == 0
    assert workload.moment_distance(workload.culprit_segment + 2) >= 6


def test_injection_keeps_grover_output(workload):
    dist = ideal_distribution(workload.circuit)
    assert max(dist.probs, key=dist.probs.get) == "101"
    assert dist.probs["101"] == pytest.approx(0.9453125)


def test_every_site_holds_one_occurrence():
    spec = preset("marrakesh")
    rule = spec.hidden_rules[0]
    layout, graph = star_layout(7, (6, 8, 17))
    base = lower_to_native(grover_circuit("101", 1), layout, graph, backend_id=spec.backend_id,
                           num_physical_qubits=156, merge_rz=True)
    sites = injection_sites(base, rule, 6)
    assert sites
    for k, seg in sites[:10]:
        c = splice(base, k, identity_gadget(rule))
        (occ,) = rule.occurrences(c)
        ids = {c.ops[p].id for p in occ}
        owners = {i for i, s in enumerate(segments_of(c, 6)) if ids & {op.id for op in s.ops}}
        assert owners == {seg}


def test_workload_site_bounds():
    with pytest.raises(InvalidArgument):
        injection_workload(preset("marrakesh"), site=10_000)
    with pytest.raises(InvalidArgument):
        injection_workload(preset("kingston"))


# -- scaling -----------------------------------------------------------------


@pytest.fixture(scope="module")
def variants():
    spec = preset("marrakesh")
    entry = entry_from_rule(spec)
    return entry, scaling_circuits(entry, sorted(spec.graph.qubits), spec.graph.sorted_edges(), 3, seed=4)


def test_variant_groups(variants):
    entry, circuits = variants
    db = PatternDB((entry,))
    assert len(circuits) == 12
    for base_index in range(3):
        family = [c for c in circuits if c.base_index == base_index]
        assert [c.survivors for c in family] == [3, 2, 1, 0]
        base = family[0].circuit
        for v in family:
            assert len(scan(v.circuit, db)) == v.survivors
            assert num_moments(v.circuit) == num_moments(base)
            assert Counter(op.signature for op in v.circuit.ops) == Counter(op.signature for op in base.ops)
        assert family[0].swaps == 0 and all(v.swaps >= 1 for v in family[1:])


@pytest.fixture(scope="module")
def small_scaling():
    spec = preset("marrakesh")
    return scaling_experiment(spec, entry_from_rule(spec), circuits_per_group=3, seed=2, shots=2000)


def test_scaling_result_layout(small_scaling, tmp_path):
    res = small_scaling
    assert len(res.rows) == 12 and sorted(res.execution_order) == list(range(12))
    assert {k: g["n"] for k, g in res.groups.items()} == {0: 3, 1: 3, 2: 3, 3: 3}
    assert res.stats["mwu"]["alternative"] == "group 0 < group 3"
    names = sorted(p.name for p in res.write(tmp_path))
    assert names == ["scaling.dat", "scaling.json", "scaling_rows.csv", "scaling_table.csv"]
    data = json.loads((tmp_path / "scaling.json").read_text())
    assert data["rows"] == res.rows
    assert len((tmp_path / "scaling_rows.csv").read_text().splitlines()) == 13
    assert len((tmp_path / "scaling.dat").read_text().splitlines()) == 13


def test_scaling_is_reproducible(small_scaling):
    spec = preset("marrakesh")
    again = scaling_experiment(spec, entry_from_rule(spec), circuits_per_group=3, seed=2, shots=2000)
    assert again.to_json() == small_scaling.to_json()


def test_scaling_rejects_foreign_qubits():
    entry = entry_from_rule(preset("fez"))
    with pytest.raises(InvalidArgument):
        scaling_experiment(preset("kingston"), entry, circuits_per_group=2)


def test_group_means_match_rows(small_scaling):
    for k, g in small_scaling.groups.items():
        vals = [r["tvd_noisy_hw"] for r in small_scaling.rows if r["survivors"] == k]
        assert g["mean_tvd_noisy_hw"] == pytest.approx(np.mean(vals))
