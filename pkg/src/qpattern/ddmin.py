"""Delta debugging over circuit segments with a stochastic ratio oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .circuit import Circuit, segments_of
from .hardware import CalibrationWindow, HardwareExecutor, export_calibration
from .oracle import (OracleCalibration, OracleConfig, SegmentOracle, baseline_gate, calibrate)
from .seeds import derive_seed


def split_groups(items: Sequence, n: int) -> list[list]:
    """Split into ``n`` contiguous groups whose sizes differ by at most one."""
    n = max(1, min(n, len(items)))
    q, r = divmod(len(items), n)
    out, start = [], 0
    for i in range(n):
        size = q + (1 if i < r else 0)
        out.append(list(items[start:start + size]))
        start += size
    return out


@dataclass
class SearchTrace:
    predicate_calls: int = 0
    narrowing_steps: int = 0
    events: list = field(default_factory=list)


def ddmin(segments: Sequence, drop: Callable, sufficient: Callable, n_max: int = 16,
          trace: SearchTrace | None = None) -> list:
    """Narrow ``segments`` to a culpable subset.

    ``drop(removed, candidates)`` says removing ``removed`` from the current
    candidates lowers the discrepancy; ``sufficient(kept)`` says keeping only
    ``kept`` still shows it. Groups are scanned in ascending order and the
    first satisfied rule wins; after any narrowing the split count resets to 2.
    """
    trace = trace if trace is not None else SearchTrace()
    cands = list(segments)
    n = 2
    while len(cands) >= 2 and n <= n_max:
        groups = split_groups(cands, n)
        narrowed = None
        for g in groups:
            rest = [s for s in cands if s not in g]
            trace.predicate_calls += 1
            if drop(g, cands):
                narrowed, how = g, "drop"
                break
            trace.predicate_calls += 1
            if drop(rest, cands):
                narrowed, how = rest, "drop-complement"
                break
            if len(g) < len(cands):
                trace.predicate_calls += 1
                if sufficient(g):
                    narrowed, how = g, "sufficient"
                    break
        if narrowed is not None:
            trace.narrowing_steps += 1
            trace.events.append({"rule": how, "n": n, "candidates": list(narrowed)})
            cands, n = narrowed, 2
            continue
        if len(groups) == len(cands):
            # already at singletons: more splitting tests the same groups again
            break
        n *= 2
    return cands


@dataclass
class DiscoveryResult:
    status: str  # found | no_excess | exhausted
    flagged_segments: list[int]
    baseline_R: float
    calibration: OracleCalibration
    oracle_calls: int
    predicate_calls: int
    narrowing_steps: int
    skipped_steps: int
    n_segments: int
    window_id: int
    fragments: list[dict] = field(default_factory=list)
    measurements: list[dict] = field(default_factory=list)
    ledger: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "flagged_segments": list(self.flagged_segments),
            "baseline_R": self.baseline_R if math.isfinite(self.baseline_R) else None,
            "calibration": self.calibration.to_dict(),
            "oracle_calls": self.oracle_calls,
            "predicate_calls": self.predicate_calls,
            "narrowing_steps": self.narrowing_steps,
            "skipped_steps": self.skipped_steps,
            "n_segments": self.n_segments,
            "window_id": self.window_id,
            "fragments": self.fragments,
            "measurements": self.measurements,
            "ledger": self.ledger,
        }


def segment_fragment(circuit: Circuit, index: int, segment_size: int) -> dict:
    seg = segments_of(circuit, segment_size)[index]
    gates = [op for op in seg.ops if op.kind.value != "measure"]
    return {
        "segment": index,
        "moments": [seg.moment_indices.start, seg.moment_indices.stop - 1],
        "ops": [str(op) for op in gates],
        "qubits": sorted({q for op in gates for q in op.qubits}),
    }


def discover(circuit: Circuit, window: CalibrationWindow, cfg: OracleConfig = OracleConfig(),
             segment_size: int = 3, seed: int = 0, n_max: int = 16, kernel: str | None = None) -> DiscoveryResult:
    executor = HardwareExecutor(window, kernel)
    return discover_with(circuit, executor, export_calibration(window), window.window_id, cfg,
                         segment_size, seed, n_max, kernel)


def discover_with(circuit, executor, nm, window_id, cfg=OracleConfig(), segment_size=3, seed=0,
                  n_max=16, kernel=None) -> DiscoveryResult:
    """Discovery given only an execution capability and the visible calibration."""
    segments = list(range(len(segments_of(circuit, segment_size))))
    cal = calibrate(circuit, nm, cfg, derive_seed(seed, window_id, "calibrate"), kernel)
    oracle = SegmentOracle(circuit, nm, executor, window_id, cal, cfg, seed, segment_size, kernel)
    base = oracle.measure(segments)

    def result(status, flagged, trace=None):
        return DiscoveryResult(
            status=status,
            flagged_segments=sorted(flagged),
            baseline_R=base.R,
            calibration=cal,
            oracle_calls=oracle.calls,
            predicate_calls=trace.predicate_calls if trace else 0,
            narrowing_steps=trace.narrowing_steps if trace else 0,
            skipped_steps=oracle.skipped,
            n_segments=len(segments),
            window_id=window_id,
            fragments=[segment_fragment(circuit, s, segment_size) for s in sorted(flagged)],
            measurements=oracle.measurements,
            ledger=oracle.ledger,
        )

    if baseline_gate(base, cal) == "no_excess":
        return result("no_excess", [])
    trace = SearchTrace()
    found = ddmin(segments, oracle.drop, oracle.sufficient, n_max, trace)
    if len(found) < len(segments) or len(segments) == 1:
        return result("found", found, trace)
    return result("exhausted", [], trace)
