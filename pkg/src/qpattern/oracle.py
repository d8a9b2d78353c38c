"""Ratio oracle: how much more a backend deviates from the ideal than the noise model predicts.

    R = TVD(ideal, hardware) / TVD(ideal, noisy model)

The acceptance threshold ``tau`` comes from the spread of R when the
"hardware" is just a second noisy simulation, and ratios whose denominator
is within shot noise of zero are not trusted at all.
"""

from __future__ import annotations

import math
import statistics
import threading
from dataclasses import dataclass
from typing import Callable, Iterable

from .circuit import Circuit, remove_segments, segments_of
from .errors import DegenerateModel, InvalidArgument
from .seeds import derive_seed
from .sim import Distribution, NoiseModel, ideal_distribution, noisy_sample, tvd

Executor = Callable[[Circuit, int, int], Distribution]


@dataclass(frozen=True)
class OracleConfig:
    shots: int = 8192
    null_runs: int = 5
    sigma_multiplier: float = 2.0
    floor_multiplier: float = 2.0

    def __post_init__(self):
        if self.shots < 1:
            raise InvalidArgument("shots must be >= 1")
        if self.null_runs < 2:
            raise InvalidArgument("null_runs must be >= 2")
        if self.sigma_multiplier <= 0 or self.floor_multiplier <= 0:
            raise InvalidArgument("multipliers must be positive")


@dataclass(frozen=True)
class OracleCalibration:
    tau: float
    tvd_min: float
    null_ratios: tuple[float, ...] = ()
    null_floor_tvds: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {"tau": self.tau, "tvd_min": self.tvd_min, "null_ratios": list(self.null_ratios),
                "null_floor_tvds": list(self.null_floor_tvds)}


@dataclass(frozen=True)
class RatioMeasurement:
    tvd_ideal_hw: float
    tvd_ideal_noisy: float
    R: float
    denominator_ok: bool

    def to_dict(self) -> dict:
        return {"tvd_ideal_hw": self.tvd_ideal_hw, "tvd_ideal_noisy": self.tvd_ideal_noisy,
                "R": self.R if math.isfinite(self.R) else None, "denominator_ok": self.denominator_ok}


def tau_from_ratios(ratios, sigma_multiplier: float = 2.0) -> float:
    return max(0.0, statistics.fmean(ratios) + sigma_multiplier * statistics.stdev(ratios) - 1.0)


def calibrate(circuit: Circuit, nm: NoiseModel, cfg: OracleConfig = OracleConfig(), seed: int = 0,
              kernel: str | None = None) -> OracleCalibration:
    ideal = ideal_distribution(circuit)
    ratios, floors = [], []
    for i in range(cfg.null_runs):
        d1 = noisy_sample(circuit, nm, cfg.shots, derive_seed(seed, "null", i, 1), kernel)
        d2 = noisy_sample(circuit, nm, cfg.shots, derive_seed(seed, "null", i, 2), kernel)
        t1, t2 = tvd(ideal, d1), tvd(ideal, d2)
        if t1 == 0.0:
            raise DegenerateModel("noisy simulation reproduced the ideal distribution exactly; "
                                  "the ratio is undefined for a noiseless model")
        ratios.append(t2 / t1)
        floors.append(tvd(d1, d2))
    tau = tau_from_ratios(ratios, cfg.sigma_multiplier)
    tvd_min = cfg.floor_multiplier * statistics.fmean(floors)
    if tvd_min <= 0.0:
        raise DegenerateModel("independent noisy samples were identical; no shot-noise floor")
    return OracleCalibration(tau, tvd_min, tuple(ratios), tuple(floors))


def ratio_from(ideal: Distribution, noisy: Distribution, hw: Distribution, cal: OracleCalibration) -> RatioMeasurement:
    num, den = tvd(ideal, hw), tvd(ideal, noisy)
    r = num / den if den > 0 else math.inf
    return RatioMeasurement(num, den, r, den >= cal.tvd_min)


def measure_ratio(circuit: Circuit, nm: NoiseModel, hw: Executor, cal: OracleCalibration,
                  shots: int, seed: int, kernel: str | None = None) -> RatioMeasurement:
    ideal = ideal_distribution(circuit)
    noisy = noisy_sample(circuit, nm, shots, derive_seed(seed, "noisy"), kernel)
    hard = hw(circuit, shots, derive_seed(seed, "hw"))
    return ratio_from(ideal, noisy, hard, cal)


def drop_predicate(baseline_R: float, reduced: RatioMeasurement, cal: OracleCalibration) -> bool:
    return reduced.denominator_ok and (baseline_R - reduced.R) > cal.tau


def sufficient_predicate(subset: RatioMeasurement, cal: OracleCalibration) -> bool:
    return subset.denominator_ok and subset.R > 1.0 + cal.tau


def baseline_gate(measurement: RatioMeasurement, cal: OracleCalibration) -> str:
    """``proceed`` when the full circuit shows excess error, else ``no_excess``."""
    if measurement.denominator_ok and measurement.R > 1.0 + cal.tau:
        return "proceed"
    return "no_excess"


class SegmentOracle:
    """Ratio measurements of a circuit restricted to subsets of its segments.

    Measurements are cached per (kept set, window, seed) since the search
    revisits subsets. ``measurements`` records every fresh measurement and
    ``ledger`` every predicate decision.
    """

    def __init__(self, circuit: Circuit, nm: NoiseModel, hw: Executor, window_id, cal: OracleCalibration,
                 cfg: OracleConfig, seed: int, segment_size: int = 3, kernel: str | None = None):
        self.circuit = circuit
        self.nm = nm
        self.hw = hw
        self.window_id = window_id
        self.cal = cal
        self.cfg = cfg
        self.seed = seed
        self.segment_size = segment_size
        self.kernel = kernel
        self.n_segments = len(segments_of(circuit, segment_size))
        self.measurements: list[dict] = []
        self.ledger: list[dict] = []
        self.skipped = 0
        self._cache: dict[tuple, RatioMeasurement] = {}
        self._lock = threading.Lock()

    @property
    def calls(self) -> int:
        return len(self._cache)

    def measure(self, kept: Iterable[int]) -> RatioMeasurement:
        kept = tuple(sorted(set(kept)))
        key = (kept, self.window_id, self.seed)
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        if len(kept) == self.n_segments:
            sub = self.circuit
        else:
            sub = remove_segments(self.circuit, kept, self.segment_size)
        m = measure_ratio(sub, self.nm, self.hw, self.cal, self.cfg.shots,
                          derive_seed(self.seed, self.window_id, kept), self.kernel)
        with self._lock:
            self._cache[key] = m
            self.measurements.append({"kept": list(kept), **m.to_dict()})
        return m

    def drop(self, removed, candidates) -> bool:
        """Removing ``removed`` from the candidate circuit lowers R by more than tau."""
        base = self.measure(candidates)
        reduced = self.measure(set(candidates) - set(removed))
        ok = base.denominator_ok and drop_predicate(base.R, reduced, self.cal)
        if not (base.denominator_ok and reduced.denominator_ok):
            self.skipped += 1
        self._note("drop", removed, candidates, ok, base.R, reduced.R)
        return ok

    def sufficient(self, kept) -> bool:
        m = self.measure(kept)
        ok = sufficient_predicate(m, self.cal)
        if not m.denominator_ok:
            self.skipped += 1
        self._note("sufficient", kept, None, ok, m.R)
        return ok

    def _note(self, kind, subset, candidates, decision, *ratios):
        entry = {"predicate": kind, "subset": sorted(subset), "decision": decision,
                 "R": [r if math.isfinite(r) else None for r in ratios]}
        if candidates is not None:
            entry["candidates"] = sorted(candidates)
        with self._lock:
            self.ledger.append(entry)
