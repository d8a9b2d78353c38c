"""Desk-scale experiments: injection recovery and survivor-count scaling.

The scaling experiment builds base circuits that contain three occurrences of
a pattern, derives variants in which 0..3 occurrences survive a ``disrupt``
pass, runs all variants in one calibration window in shuffled order and
correlates the survivor count with the hardware-vs-model discrepancy.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .circuit import Circuit, Gate, Operation, cz, measure, moment_indices, rz, segments_of, sx, x
from .errors import InvalidArgument, QPatternError
from .hardware import BackendSpec, ContextRule, export_calibration, execute, open_window
from .lowering import grover_circuit, lower_to_native, star_layout
from .patterns import PatternDB, PatternEntry, scan
from .seeds import derive_seed
from .sim import equal_up_to_phase, ideal_distribution, ideal_unitary, noisy_sample, tvd
from .stats import mann_whitney_u, spearman
from .transform import disrupt

# -- injection workload ------------------------------------------------------


def _inverse(op: Operation) -> list[Operation]:
    if op.kind is Gate.RZ:
        return [rz(-op.angle, op.qubits[0])]
    if op.kind is Gate.SX:
        # sx^3 = sx^dagger
        return [x(op.qubits[0]), sx(op.qubits[0])]
    return [Operation(op.kind, op.qubits, op.angle)]


def rule_instance(template, binding: Sequence[int], angles=None) -> list[Operation]:
    """Concrete ops for one occurrence of ``template`` bound to ``binding``."""
    angles = list(angles) if angles is not None else []
    ops = []
    for e in template:
        qubits = tuple(binding[r] for r in e.roles)
        if e.kind is Gate.RZ:
            theta = angles.pop(0) if angles else 0.7 + 0.4 * len(ops)
            ops.append(rz(theta, qubits[0]))
        else:
            ops.append(Operation(e.kind, qubits))
    return ops


def identity_gadget(rule: ContextRule, angles=None) -> list[Operation]:
    """One occurrence of ``rule`` followed by its inverse; the product is the identity.

    For two-qubit rules the gadget is wrapped in CZs on the bound pair, which
    lines both timelines up so the occurrence starts in a single moment.
    """
    body = rule_instance(rule.template, rule.binding, angles)
    undo = [inv for op in reversed(body) for inv in _inverse(op)]
    if len(rule.binding) == 2:
        a, b = rule.binding
        return [cz(a, b), *body, *undo, cz(a, b)]
    return [*body, *undo]


def splice(circuit: Circuit, position: int, ops: Sequence[Operation]) -> Circuit:
    fresh = [Operation(op.kind, op.qubits, op.angle) for op in circuit.ops]
    return Circuit(circuit.backend_id, circuit.num_physical_qubits, tuple(fresh[:position] + list(ops) + fresh[position:]))


def injection_sites(circuit: Circuit, rule: ContextRule, segment_size: int) -> list[tuple[int, int]]:
    """(op position, segment) pairs where splicing the gadget yields exactly one
    occurrence of ``rule`` lying wholly inside one segment."""
    gadget = identity_gadget(rule)
    sites = []
    for k in range(len(circuit.ops) + 1):
        if any(op.kind is Gate.MEASURE for op in circuit.ops[:k]):
            break
        trial = splice(circuit, k, gadget)
        occ = rule.occurrences(trial)
        if len(occ) != 1:
            continue
        mi = moment_indices(trial.ops)
        segs = {mi[p] // segment_size for p in occ[0]}
        if len(segs) == 1:
            sites.append((k, segs.pop()))
    return sites


@dataclass(frozen=True)
class InjectionWorkload:
    circuit: Circuit
    culprit_segment: int
    occurrence: tuple[int, ...]
    segment_size: int

    @property
    def occurrence_moments(self) -> tuple[int, int]:
        mi = moment_indices(self.circuit.ops)
        ms = [mi[p] for p in self.occurrence]
        return min(ms), max(ms)

    def moment_distance(self, segment: int) -> int:
        """Moments separating ``segment`` from the occurrence (0 when they overlap)."""
        seg = segments_of(self.circuit, self.segment_size)[segment].moment_indices
        lo, hi = self.occurrence_moments
        if seg.stop - 1 < lo:
            return lo - (seg.stop - 1)
        if seg.start > hi:
            return seg.start - hi
        return 0


def injection_workload(spec: BackendSpec, rule: ContextRule | None = None, marked: str = "101",
                       iterations: int = 2, segment_size: int = 6, site: int = 0) -> InjectionWorkload:
    """Grover on the backend's star with one identity gadget carrying ``rule``.

    ``site`` indexes the valid splice positions in circuit order.
    """
    rule = rule or (spec.hidden_rules[0] if spec.hidden_rules else None)
    if rule is None:
        raise InvalidArgument("backend has no hidden rule to inject")
    leaves = sorted(q for q in spec.graph.qubits if len(spec.graph.neighbors(q)) == 1)
    hubs = [q for q in spec.graph.qubits if len(spec.graph.neighbors(q)) >= 3]
    if not hubs or len(leaves) < 3:
        raise InvalidArgument("injection workload needs a star-shaped coupling graph")
    layout, graph = star_layout(hubs[0], leaves[:3])
    base = lower_to_native(grover_circuit(marked, iterations), layout, graph, backend_id=spec.backend_id,
                           num_physical_qubits=spec.num_physical_qubits, merge_rz=True)
    sites = injection_sites(base, rule, segment_size)
    if not sites:
        raise QPatternError("no splice position keeps the occurrence inside one segment")
    if not 0 <= site < len(sites):
        raise InvalidArgument(f"site must lie in [0, {len(sites)})")
    k, seg = sites[site]
    circuit = splice(base, k, identity_gadget(rule))
    return InjectionWorkload(circuit, seg, tuple(rule.occurrences(circuit)[0]), segment_size)


# -- scaling experiment ------------------------------------------------------

FILLER_MOMENTS = 6


def _filler_layer(rng: np.random.Generator, qubits: Sequence[int], edges: Sequence[tuple[int, int]]):
    ops = []
    busy: set[int] = set()
    if edges and rng.random() < 0.5:
        a, b = edges[int(rng.integers(len(edges)))]
        ops.append(cz(a, b))
        busy = {a, b}
    for q in qubits:
        if q in busy:
            continue
        r = rng.random()
        if r < 0.45:
            ops.append(sx(q))
        elif r < 0.6:
            ops.append(x(q))
        if rng.random() < 0.6:
            ops.append(rz(float(rng.uniform(-math.pi, math.pi)), q))
    return ops


def embedding_circuit(entry: PatternEntry, qubits: Sequence[int], edges: Sequence[tuple[int, int]],
                      rng: np.random.Generator, occurrences: int = 3, spacing: int = FILLER_MOMENTS,
                      num_physical_qubits: int = 156) -> Circuit:
    """Random native filler with ``occurrences`` copies of the entry's template spliced in."""
    ops: list[Operation] = []

    def filler():
        for _ in range(spacing):
            ops.extend(_filler_layer(rng, qubits, edges))

    filler()
    for _ in range(occurrences):
        n_rz = sum(e.kind is Gate.RZ for e in entry.template)
        ops.extend(rule_instance(entry.template, entry.qubit_tuple, rng.uniform(-math.pi, math.pi, n_rz)))
        filler()
    ops.extend(measure(q) for q in qubits)
    return Circuit(entry.backend_id, num_physical_qubits, tuple(ops))


@dataclass(frozen=True)
class ScalingCircuit:
    base_index: int
    survivors: int
    circuit: Circuit
    swaps: int


def scaling_circuits(entry: PatternEntry, qubits: Sequence[int], edges: Sequence[tuple[int, int]],
                     circuits_per_group: int = 10, seed: int = 0, max_attempts: int = 200,
                     num_physical_qubits: int = 156) -> list[ScalingCircuit]:
    """Base circuits with exactly 3 occurrences plus their 2-, 1- and 0-survivor variants.

    Base circuits whose occurrences cannot all be disrupted are redrawn.
    """
    db = PatternDB((entry,))
    out = []
    rng = np.random.default_rng(derive_seed(seed, "scaling-circuits"))
    attempts = 0
    while len(out) < 4 * circuits_per_group:
        attempts += 1
        if attempts > max_attempts:
            raise QPatternError("could not build enough disruptable base circuits")
        base = embedding_circuit(entry, qubits, edges, rng, num_physical_qubits=num_physical_qubits)
        if len(scan(base, db)) != 3:
            continue
        variants = [ScalingCircuit(len(out) // 4, 3, base, 0)]
        ok = True
        for k in (1, 2, 3):
            res = disrupt(base, db, max_disruptions=k, check_unitary=False)
            left = len(scan(res.circuit, db))
            if left != 3 - k:
                ok = False
                break
            variants.append(ScalingCircuit(len(out) // 4, 3 - k, res.circuit, len(res.swaps_applied)))
        if ok:
            out.extend(variants)
    return out


@dataclass
class ScalingResult:
    backend_id: str
    pattern_key: str
    seed: int
    rows: list[dict]
    groups: dict[int, dict]
    stats: dict
    execution_order: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "backend_id": self.backend_id,
            "pattern_key": self.pattern_key,
            "seed": self.seed,
            "rows": self.rows,
            "groups": {str(k): v for k, v in sorted(self.groups.items())},
            "stats": self.stats,
            "execution_order": self.execution_order,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["circuit", "base_index", "survivors", "swaps", "execution_position", "tvd_noisy_hw", "tvd_ideal_noisy"]
        writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({c: row[c] for c in cols})
        return buf.getvalue()

    def table_csv(self) -> str:
        """One summary line: group means and the test statistics."""
        s = self.stats
        cols = ["backend_id", "mean_0", "mean_1", "mean_2", "mean_3", "reduction", "spearman_rho", "spearman_p",
                "mwu_U", "mwu_p", "blind_rho", "blind_p", "swaps_rho"]
        row = {"backend_id": self.backend_id, "reduction": s["relative_reduction"],
               "spearman_rho": s["hw"]["rho"], "spearman_p": s["hw"]["p"], "mwu_U": s["mwu"]["U"],
               "mwu_p": s["mwu"]["p"], "blind_rho": s["blind"]["rho"], "blind_p": s["blind"]["p"],
               "swaps_rho": s["swaps"]["rho"] if s["swaps"] else ""}
        for k in range(4):
            row[f"mean_{k}"] = self.groups[k]["mean_tvd_noisy_hw"]
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        writer.writerow(row)
        return buf.getvalue()

    def gnuplot_data(self) -> str:
        lines = ["# survivors tvd_noisy_hw tvd_ideal_noisy"]
        for row in sorted(self.rows, key=lambda r: (r["survivors"], r["circuit"])):
            lines.append(f"{row['survivors']} {row['tvd_noisy_hw']:.6f} {row['tvd_ideal_noisy']:.6f}")
        return "\n".join(lines) + "\n"

    def write(self, outdir) -> list[Path]:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        files = {"scaling.json": self.to_json(), "scaling_rows.csv": self.to_csv(),
                 "scaling_table.csv": self.table_csv(), "scaling.dat": self.gnuplot_data()}
        paths = []
        for name, text in files.items():
            p = outdir / name
            p.write_text(text)
            paths.append(p)
        return paths


def _group_summary(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std(ddof=1)) if len(arr) > 1 else 0.0


def _fraction_text(f):
    return None if f is None else f"{f.numerator}/{f.denominator}"


def _maybe_spearman(xs, ys):
    try:
        r = spearman(xs, ys)
    except ValueError:
        return None
    return {"rho": r.rho, "p": r.p, "exact_p": _fraction_text(r.exact_p)}


def scaling_experiment(spec: BackendSpec, entry: PatternEntry, circuits_per_group: int = 10, seed: int = 0,
                       shots: int = 8192, window_index: int = 0, kernel: str | None = None) -> ScalingResult:
    """Run the survivor-count experiment on ``spec`` in a single window.

    The entry is re-targeted to ``spec``'s backend, so the same pattern can be
    used on a control backend that has no matching rule.
    """
    if circuits_per_group < 2:
        raise InvalidArgument("need at least 2 circuits per group")
    entry = replace(entry, backend_id=spec.backend_id)
    missing = [q for q in entry.qubit_tuple if q not in spec.graph.qubits]
    if missing:
        raise InvalidArgument(f"pattern qubits {missing} are not on the backend's coupling graph")
    qubits = sorted(spec.graph.qubits)
    edges = spec.graph.sorted_edges()
    circuits = scaling_circuits(entry, qubits, edges, circuits_per_group, seed,
                                num_physical_qubits=spec.num_physical_qubits)
    window = open_window(spec, window_index, seed)
    nm = export_calibration(window)
    order = [int(i) for i in np.random.default_rng(derive_seed(seed, "order")).permutation(len(circuits))]
    hw_dist = {}
    for pos, idx in enumerate(order):
        hw_dist[idx] = execute(circuits[idx].circuit, window, shots, derive_seed(seed, "hw", pos), kernel)
    rows = []
    for idx, sc in enumerate(circuits):
        ideal = ideal_distribution(sc.circuit)
        noisy = noisy_sample(sc.circuit, nm, shots, derive_seed(seed, "noisy", idx), kernel)
        rows.append({
            "circuit": idx,
            "base_index": sc.base_index,
            "survivors": sc.survivors,
            "swaps": sc.swaps,
            "execution_position": order.index(idx),
            "tvd_noisy_hw": tvd(noisy, hw_dist[idx]),
            "tvd_ideal_noisy": tvd(ideal, noisy),
            "fingerprint": sc.circuit.fingerprint(),
        })
    groups = {}
    for k in range(4):
        hw_vals = [r["tvd_noisy_hw"] for r in rows if r["survivors"] == k]
        blind_vals = [r["tvd_ideal_noisy"] for r in rows if r["survivors"] == k]
        m, s = _group_summary(hw_vals)
        bm, bs = _group_summary(blind_vals)
        groups[k] = {"n": len(hw_vals), "mean_tvd_noisy_hw": m, "std_tvd_noisy_hw": s,
                     "mean_tvd_ideal_noisy": bm, "std_tvd_ideal_noisy": bs}
    surv = [r["survivors"] for r in rows]
    g0 = [r["tvd_noisy_hw"] for r in rows if r["survivors"] == 0]
    g3 = [r["tvd_noisy_hw"] for r in rows if r["survivors"] == 3]
    mwu = mann_whitney_u(g0, g3)
    m0, m3 = groups[0]["mean_tvd_noisy_hw"], groups[3]["mean_tvd_noisy_hw"]
    deltas = [groups[k + 1]["mean_tvd_noisy_hw"] - groups[k]["mean_tvd_noisy_hw"] for k in range(3)]
    stats = {
        "hw": _maybe_spearman(surv, [r["tvd_noisy_hw"] for r in rows]),
        "blind": _maybe_spearman(surv, [r["tvd_ideal_noisy"] for r in rows]),
        "swaps": _maybe_spearman(surv, [r["swaps"] for r in rows]),
        "mwu": {"U": mwu.U, "p": mwu.p, "exact_p": _fraction_text(mwu.exact_p), "alternative": "group 0 < group 3"},
        "relative_reduction": (m3 - m0) / m3 if m3 > 0 else 0.0,
        "group_deltas": deltas,
        "onset": {
            "first_step_within_std": abs(deltas[0]) <= groups[1]["std_tvd_noisy_hw"],
            "last_step_exceeds_std": deltas[2] > groups[3]["std_tvd_noisy_hw"],
        },
    }
    return ScalingResult(spec.backend_id, entry.key_text, seed, rows, groups, stats, order)


def entry_from_rule(spec: BackendSpec, rule: ContextRule | None = None) -> PatternEntry:
    """A database entry standing in for a promoted pattern matching ``rule``."""
    rule = rule or spec.hidden_rules[0]
    return PatternEntry(spec.backend_id, rule.binding, tuple(e.stripped() for e in rule.template),
                        ("rule:0", "rule:1"), ("rule:0", "rule:1"))


def check_gadget(rule: ContextRule) -> bool:
    """True when the injection gadget is the identity (up to global phase)."""
    ops = identity_gadget(rule)
    n = max(q for op in ops for q in op.qubits) + 1
    c = Circuit("check", n, tuple(ops))
    u = ideal_unitary(c)
    return equal_up_to_phase(u, np.eye(u.shape[0]))
