"""Mock hardware backend.

A backend executes circuits with the same trajectory simulator as the noise
model, plus hidden context rules: whenever a rule's template occurs in the
circuit, an extra depolarizing channel hits the bound qubits right after the
last op of the occurrence. Each calibration window jitters the calibration
and may add one transient rule. Only ``export_calibration`` and
``HardwareExecutor`` are meant to be handed to the discovery code.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .circuit import Circuit, Gate
from .errors import InvalidArgument
from .lowering import CouplingGraph
from .matching import Template, TemplateElement, find_occurrences, make_template, validate_template
from .seeds import derive_seed
from .sim import (Distribution, GateNoise, NoiseModel, QubitNoise, compile_program,
                  default_noise_model, run_program)

NATIVE_ALPHABET = (Gate.RZ, Gate.SX, Gate.X, Gate.CZ)


@dataclass(frozen=True)
class ContextRule:
    template: Template
    binding: tuple[int, ...]
    excess: float
    transient: bool = False

    def __post_init__(self):
        object.__setattr__(self, "template", make_template(self.template))
        object.__setattr__(self, "binding", tuple(int(q) for q in self.binding))
        validate_template(self.template, self.binding)
        if not 0.0 < self.excess <= 1.0:
            raise InvalidArgument("rule excess must lie in (0, 1]")
        if len(self.binding) > 2:
            raise InvalidArgument("rules bind at most 2 qubits")

    def occurrences(self, circuit: Circuit) -> list[tuple[int, ...]]:
        return find_occurrences(circuit.ops, self.template, self.binding)

    def to_dict(self) -> dict:
        return {
            "template": [e.to_json() for e in self.template],
            "binding": list(self.binding),
            "excess": self.excess,
            "transient": self.transient,
        }

    @classmethod
    def from_dict(cls, d) -> "ContextRule":
        return cls(tuple(TemplateElement.from_json(e) for e in d["template"]), tuple(d["binding"]),
                   float(d["excess"]), bool(d.get("transient", False)))


@dataclass(frozen=True)
class BackendSpec:
    backend_id: str
    num_physical_qubits: int
    graph: CouplingGraph
    base_calibration: NoiseModel
    hidden_rules: tuple[ContextRule, ...] = ()
    sigma_mult: float = 0.0
    transient_prob: float = 0.0
    transient_excess: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "hidden_rules", tuple(self.hidden_rules))
        if self.sigma_mult < 0:
            raise InvalidArgument("sigma_mult must be >= 0")
        if not 0.0 <= self.transient_prob <= 1.0:
            raise InvalidArgument("transient_prob must lie in [0, 1]")
        if not 0.0 < self.transient_excess <= 1.0:
            raise InvalidArgument("transient_excess must lie in (0, 1]")
        for rule in self.hidden_rules:
            for q in rule.binding:
                if q not in self.base_calibration.qubits:
                    raise InvalidArgument(f"rule binds uncalibrated qubit q{q}")

    def with_rules(self, rules: Sequence[ContextRule]) -> "BackendSpec":
        return replace(self, hidden_rules=tuple(rules))

    def to_dict(self) -> dict:
        return {
            "backend_id": self.backend_id,
            "num_physical_qubits": self.num_physical_qubits,
            "edges": [list(e) for e in self.graph.sorted_edges()],
            "base_calibration": self.base_calibration.to_dict(),
            "hidden_rules": [r.to_dict() for r in self.hidden_rules],
            "drift": {"sigma_mult": self.sigma_mult, "transient_prob": self.transient_prob,
                      "transient_excess": self.transient_excess},
        }

    @classmethod
    def from_dict(cls, d) -> "BackendSpec":
        try:
            drift = d.get("drift", {})
            return cls(
                backend_id=str(d["backend_id"]),
                num_physical_qubits=int(d["num_physical_qubits"]),
                graph=CouplingGraph(tuple(e) for e in d["edges"]),
                base_calibration=NoiseModel.from_dict(d["base_calibration"]),
                hidden_rules=tuple(ContextRule.from_dict(r) for r in d.get("hidden_rules", [])),
                sigma_mult=float(drift.get("sigma_mult", 0.0)),
                transient_prob=float(drift.get("transient_prob", 0.0)),
                transient_excess=float(drift.get("transient_excess", 0.05)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidArgument):
                raise
            raise InvalidArgument(f"malformed backend spec: {exc!r}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "BackendSpec":
        return cls.from_dict(json.loads(text))


def load_backend(path) -> BackendSpec:
    return BackendSpec.from_json(Path(path).read_text())


@dataclass(frozen=True)
class CalibrationWindow:
    window_id: int
    backend_id: str
    num_physical_qubits: int
    realized_calibration: NoiseModel
    realized_rules: tuple[ContextRule, ...]
    seed: int


def _jitter_calibration(base: NoiseModel, sigma: float, rng: np.random.Generator) -> NoiseModel:
    if sigma == 0.0:
        return base

    def factor():
        # mean-one lognormal
        return math.exp(sigma * rng.standard_normal() - 0.5 * sigma * sigma)

    gates = {}
    for name, g in sorted(base.gates.items()):
        gates[name] = GateNoise(min(1.0, g.p * factor()), g.dur)
    qubits = {}
    for q, qn in sorted(base.qubits.items()):
        t1 = qn.t1 * factor() if qn.t1 is not None else None
        t2 = qn.t2 * factor() if qn.t2 is not None else None
        if t1 is not None and t2 is not None:
            t2 = min(t2, 2.0 * t1)
        qubits[q] = QubitNoise(t1, t2, min(1.0, qn.ro01 * factor()), min(1.0, qn.ro10 * factor()))
    return NoiseModel(gates, qubits)


def random_transient_rule(graph: CouplingGraph, excess: float, rng: np.random.Generator,
                          alphabet: Sequence[Gate] = NATIVE_ALPHABET) -> ContextRule:
    """A length-2 rule over the gate alphabet on a random coupled pair."""
    edges = graph.sorted_edges()
    a, b = edges[int(rng.integers(len(edges)))]
    if rng.random() < 0.5:
        a, b = b, a
    k1, k2 = (alphabet[int(rng.integers(len(alphabet)))] for _ in range(2))
    if Gate.CZ not in (k1, k2):
        # two single-qubit gates in a row on one qubit
        return ContextRule(((k1, (0,)), (k2, (0,))), (a,), excess, transient=True)
    elements = []
    for k in (k1, k2):
        elements.append((k, (0, 1)) if k is Gate.CZ else (k, (int(rng.integers(2)),)))
    return ContextRule(tuple(elements), (a, b), excess, transient=True)


def open_window(spec: BackendSpec, window_index: int, master_seed: int) -> CalibrationWindow:
    if window_index < 0:
        raise InvalidArgument("window_index must be >= 0")
    seed = derive_seed(master_seed, spec.backend_id, window_index, "window")
    rng = np.random.default_rng(seed)
    cal = _jitter_calibration(spec.base_calibration, spec.sigma_mult, rng)
    rules = list(spec.hidden_rules)
    if spec.transient_prob > 0.0 and rng.random() < spec.transient_prob and spec.graph.edges:
        rules.append(random_transient_rule(spec.graph, spec.transient_excess, rng))
    return CalibrationWindow(window_index, spec.backend_id, spec.num_physical_qubits, cal, tuple(rules), seed)


def export_calibration(window: CalibrationWindow) -> NoiseModel:
    """The calibration visible to the noise model: no context rules."""
    return window.realized_calibration


def rule_extra_channels(circuit: Circuit, rules: Sequence[ContextRule]) -> dict[int, list]:
    extra: dict[int, list] = {}
    for rule in rules:
        for occ in rule.occurrences(circuit):
            extra.setdefault(max(occ), []).append((rule.binding, rule.excess))
    return extra


def execute(circuit: Circuit, window: CalibrationWindow, shots: int, seed: int,
            backend: str | None = None) -> Distribution:
    cal = window.realized_calibration
    unknown = sorted(q for q in circuit.used_qubits if q not in cal.qubits)
    if unknown:
        raise InvalidArgument(f"qubits {unknown} are not part of backend {window.backend_id}")
    prog = compile_program(circuit, cal, rule_extra_channels(circuit, window.realized_rules))
    return run_program(prog, shots, seed, backend)


class HardwareExecutor:
    """Execution capability for one window; exposes no rule information."""

    def __init__(self, window: CalibrationWindow, kernel: str | None = None):
        self._window = window
        self._kernel = kernel
        self.window_id = window.window_id
        self.backend_id = window.backend_id

    def __call__(self, circuit: Circuit, shots: int, seed: int) -> Distribution:
        return execute(circuit, self._window, shots, seed, self._kernel)

    def calibration(self) -> NoiseModel:
        return export_calibration(self._window)


# -- presets -----------------------------------------------------------------

FEZ_STAR = (107, (97, 106, 108))
MARRAKESH_STAR = (7, (6, 8, 17))
KINGSTON_STAR = (7, (6, 8, 17))

# single-qubit rotations on two coupled qubits immediately followed by a CZ
FEZ_RULE = make_template([("sx", (0,)), ("rz", (0,)), ("sx", (1,)), ("cz", (0, 1))])
# a phase and a flip on the leaf ahead of the CZ with the hub
MARRAKESH_RULE = make_template([("rz", (0,)), ("x", (1,)), ("rz", (1,)), ("cz", (0, 1))])


def preset_calibration(qubits: Sequence[int], seed: int, spread: float = 0.15) -> NoiseModel:
    """Default calibration with fixed per-qubit variation."""
    base = default_noise_model(qubits)
    rng = np.random.default_rng(seed)
    out = {}
    for q in sorted(qubits):
        qn = base.qubits[q]
        f1, f2, f3 = np.exp(spread * rng.standard_normal(3))
        t1 = qn.t1 * f1
        t2 = min(qn.t2 * f2, 2 * t1)
        out[q] = QubitNoise(t1, t2, qn.ro01 * f3, qn.ro10 * f3)
    return NoiseModel(base.gates, out)


def preset(name: str, excess: float = 0.05, sigma_mult: float = 0.05, transient_prob: float = 0.0) -> BackendSpec:
    n = 156
    if name == "fez":
        hub, leaves = FEZ_STAR
        rules = (ContextRule(FEZ_RULE, (107, 108), excess),)
    elif name == "marrakesh":
        hub, leaves = MARRAKESH_STAR
        rules = (ContextRule(MARRAKESH_RULE, (7, 8), excess),)
    elif name == "kingston":
        hub, leaves = KINGSTON_STAR
        rules = ()
    else:
        raise InvalidArgument(f"unknown preset {name!r}; choose fez, marrakesh or kingston")
    graph = CouplingGraph((hub, leaf) for leaf in leaves)
    cal = preset_calibration(range(n), derive_seed("preset", name))
    return BackendSpec(f"ibm_{name}", n, graph, cal, rules, sigma_mult, transient_prob)
