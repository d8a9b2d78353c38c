"""Cross-window verification, the pattern database, and occurrence scanning."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

from .circuit import Circuit, Gate, Operation, parse_circuit, segments_of, serialize_circuit
from .ddmin import DiscoveryResult, discover
from .errors import DatabaseParseError, InvalidArgument, MigrationError
from .hardware import BackendSpec, open_window
from .matching import Template, TemplateElement, find_occurrences, template_from_ops, validate_template
from .oracle import OracleConfig
from .seeds import derive_seed

FORMAT_VERSION = 1


def template_text(template: Template) -> str:
    return " ".join(f"{e.kind.value}[{','.join(map(str, e.roles))}]" for e in template)


def _now() -> str:
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


@dataclass(frozen=True)
class PatternEntry:
    backend_id: str
    qubit_tuple: tuple[int, ...]
    template: Template
    # windows are identified by "<master seed>:<window index>" labels, so
    # merging two databases counts every window once
    window_ids: tuple[str, ...]
    flagged_window_ids: tuple[str, ...]
    source_segment: dict = field(default_factory=dict, compare=False, hash=False)
    metadata: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "qubit_tuple", tuple(int(q) for q in self.qubit_tuple))
        object.__setattr__(self, "template", tuple(e.stripped() if e.angle is None else e for e in self.template))
        validate_template(self.template, self.qubit_tuple)
        ids = tuple(sorted(set(self.window_ids)))
        flagged = tuple(sorted(set(self.flagged_window_ids)))
        if not set(flagged) <= set(ids):
            raise InvalidArgument("flagged windows must be a subset of evaluated windows")
        object.__setattr__(self, "window_ids", ids)
        object.__setattr__(self, "flagged_window_ids", flagged)

    @property
    def windows_flagged(self) -> int:
        return len(self.flagged_window_ids)

    @property
    def windows_total(self) -> int:
        return len(self.window_ids)

    @property
    def consistency(self) -> float:
        return self.windows_flagged / self.windows_total if self.windows_total else 0.0

    @property
    def key(self) -> tuple:
        return (self.backend_id, self.qubit_tuple, tuple((e.kind.value, e.roles) for e in self.template))

    @property
    def key_text(self) -> str:
        return f"{self.backend_id}|{','.join(map(str, self.qubit_tuple))}|{template_text(self.template)}"

    def to_dict(self) -> dict:
        return {
            "backend_id": self.backend_id,
            "qubit_tuple": list(self.qubit_tuple),
            "template": [e.to_json() for e in self.template],
            "windows_flagged": self.windows_flagged,
            "windows_total": self.windows_total,
            "window_ids": list(self.window_ids),
            "flagged_window_ids": list(self.flagged_window_ids),
            "source_segment": self.source_segment,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d) -> "PatternEntry":
        entry = cls(
            backend_id=str(d["backend_id"]),
            qubit_tuple=tuple(d["qubit_tuple"]),
            template=tuple(TemplateElement.from_json(e) for e in d["template"]),
            window_ids=tuple(d["window_ids"]),
            flagged_window_ids=tuple(d["flagged_window_ids"]),
            source_segment=dict(d.get("source_segment", {})),
            metadata=dict(d.get("metadata", {})),
        )
        if (entry.windows_flagged, entry.windows_total) != (d.get("windows_flagged", entry.windows_flagged),
                                                           d.get("windows_total", entry.windows_total)):
            raise DatabaseParseError(f"evidence counts disagree with window lists for {entry.key_text}")
        return entry


@dataclass(frozen=True)
class PatternDB:
    entries: tuple[PatternEntry, ...] = ()
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        entries = tuple(sorted(self.entries, key=lambda e: e.key_text))
        keys = [e.key for e in entries]
        if len(set(keys)) != len(keys):
            raise InvalidArgument("duplicate pattern entries")
        object.__setattr__(self, "entries", entries)

    def for_backend(self, backend_id: str) -> list[PatternEntry]:
        return [e for e in self.entries if e.backend_id == backend_id]

    def to_dict(self) -> dict:
        return {"format_version": self.format_version, "entries": [e.to_dict() for e in self.entries]}

    @classmethod
    def from_dict(cls, d) -> "PatternDB":
        if not isinstance(d, dict) or "format_version" not in d:
            raise DatabaseParseError("pattern database lacks format_version")
        if d["format_version"] != FORMAT_VERSION:
            raise MigrationError(f"pattern database version {d['format_version']!r} is not supported "
                                 f"(expected {FORMAT_VERSION}) and no migration exists")
        try:
            return cls(tuple(PatternEntry.from_dict(e) for e in d["entries"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise DatabaseParseError(f"malformed pattern entry: {exc}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


def db_load(path) -> PatternDB:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DatabaseParseError(f"{path}: {exc}") from None
    return PatternDB.from_dict(data)


def db_save(db: PatternDB, path) -> None:
    """Atomic write: temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", suffix=".json", dir=path.parent)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(db.to_json())
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _merge_metadata(a: dict, b: dict) -> dict:
    out = {**b, **a}
    created = [m["created"] for m in (a, b) if m.get("created")]
    updated = [m["updated"] for m in (a, b) if m.get("updated")]
    if created:
        out["created"] = min(created)
    if updated:
        out["updated"] = max(updated)
    return out


def _merge_entries(a: PatternEntry, b: PatternEntry) -> PatternEntry:
    return replace(a, window_ids=a.window_ids + b.window_ids,
                   flagged_window_ids=a.flagged_window_ids + b.flagged_window_ids,
                   metadata=_merge_metadata(a.metadata, b.metadata))


def db_merge(a: PatternDB, b: PatternDB) -> PatternDB:
    merged = {e.key: e for e in a.entries}
    for e in b.entries:
        merged[e.key] = _merge_entries(merged[e.key], e) if e.key in merged else e
    return PatternDB(tuple(merged.values()))


def db_add(db: PatternDB, entries: Iterable[PatternEntry]) -> PatternDB:
    return db_merge(db, PatternDB(tuple(entries)))


# -- verification ------------------------------------------------------------

@dataclass
class PersistenceReport:
    backend_id: str
    circuit: Circuit
    segment_size: int
    master_seed: int
    window_labels: list[str]
    results: list[DiscoveryResult]

    @property
    def n_windows(self) -> int:
        return len(self.results)

    @property
    def n_segments(self) -> int:
        return len(segments_of(self.circuit, self.segment_size))

    def flag_counts(self) -> list[int]:
        counts = [0] * self.n_segments
        for r in self.results:
            for s in r.flagged_segments:
                counts[s] += 1
        return counts

    def flagged_windows(self, segment: int) -> list[str]:
        return [lbl for lbl, r in zip(self.window_labels, self.results) if segment in r.flagged_segments]

    def rows(self) -> list[dict]:
        segs = segments_of(self.circuit, self.segment_size)
        counts = self.flag_counts()
        out = []
        for seg, c in zip(segs, counts):
            out.append({
                "segment": seg.index,
                "moments": f"{seg.moment_indices.start}-{seg.moment_indices.stop - 1}",
                "windows_flagged": c,
                "windows_total": self.n_windows,
                "consistency": c / self.n_windows,
            })
        return out

    def to_dict(self) -> dict:
        return {
            "backend_id": self.backend_id,
            "circuit": serialize_circuit(self.circuit),
            "segment_size": self.segment_size,
            "master_seed": self.master_seed,
            "window_labels": list(self.window_labels),
            "table": self.rows(),
            "windows": [r.to_dict() for r in self.results],
        }

    @classmethod
    def from_dict(cls, d) -> "PersistenceReport":
        from .oracle import OracleCalibration

        results = []
        for w in d["windows"]:
            cal = w["calibration"]
            results.append(DiscoveryResult(
                status=w["status"], flagged_segments=list(w["flagged_segments"]),
                baseline_R=w["baseline_R"] if w["baseline_R"] is not None else float("inf"),
                calibration=OracleCalibration(cal["tau"], cal["tvd_min"], tuple(cal["null_ratios"]),
                                              tuple(cal.get("null_floor_tvds", ()))),
                oracle_calls=w["oracle_calls"], predicate_calls=w["predicate_calls"],
                narrowing_steps=w["narrowing_steps"], skipped_steps=w["skipped_steps"],
                n_segments=w["n_segments"], window_id=w["window_id"], fragments=w.get("fragments", []),
                measurements=w.get("measurements", []), ledger=w.get("ledger", []),
            ))
        return cls(d["backend_id"], parse_circuit(d["circuit"]), d["segment_size"], d["master_seed"],
                   list(d["window_labels"]), results)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=["segment", "moments", "windows_flagged", "windows_total",
                                                 "consistency"], lineterminator="\n")
        writer.writeheader()
        for row in self.rows():
            writer.writerow({**row, "consistency": f"{row['consistency']:.2f}"})
        return buf.getvalue()


def _verify_one(args):
    circuit, spec, wi, cfg, master_seed, segment_size, kernel = args
    window = open_window(spec, wi, master_seed)
    return discover(circuit, window, cfg, segment_size, derive_seed(master_seed, "discover", wi), kernel=kernel)


def verify(circuit: Circuit, spec: BackendSpec, n_windows: int, cfg: OracleConfig = OracleConfig(),
           master_seed: int = 0, segment_size: int = 3, jobs: int = 1, first_window: int = 0,
           kernel: str | None = None) -> PersistenceReport:
    """Run discovery independently in ``n_windows`` calibration windows."""
    if n_windows < 2:
        raise InvalidArgument("verification needs at least 2 windows")
    if circuit.backend_id != spec.backend_id:
        raise InvalidArgument(f"circuit targets {circuit.backend_id}, backend is {spec.backend_id}")
    indices = list(range(first_window, first_window + n_windows))
    tasks = [(circuit, spec, wi, cfg, master_seed, segment_size, kernel) for wi in indices]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_verify_one, tasks))
    else:
        results = [_verify_one(t) for t in tasks]
    labels = [f"{master_seed}:{wi}" for wi in indices]
    return PersistenceReport(spec.backend_id, circuit, segment_size, master_seed, labels, results)


def connected_components(ops: Sequence[Operation]) -> list[list[Operation]]:
    """Split ops into groups linked through shared qubits, in first-op order."""
    parent: dict[int, int] = {}

    def find(q):
        while parent.setdefault(q, q) != q:
            parent[q] = parent[parent[q]]
            q = parent[q]
        return q

    for op in ops:
        roots = [find(q) for q in op.qubits]
        for r in roots[1:]:
            parent[r] = roots[0]
    groups: dict[int, list[Operation]] = {}
    for op in ops:
        groups.setdefault(find(op.qubits[0]), []).append(op)
    return sorted(groups.values(), key=lambda g: g[0].id if g[0].id is not None else 0)


def segment_pattern(circuit: Circuit, segment: int, segment_size: int):
    """(template, binding, dropped ops) for the dominant connected block of a segment.

    The block with the most ops wins; ties go to the one containing a CZ,
    then to the earliest.
    """
    seg = segments_of(circuit, segment_size)[segment]
    gates = [op for op in seg.ops if op.kind is not Gate.MEASURE]
    comps = connected_components(gates)
    if not comps:
        return None
    best = max(comps, key=lambda g: (len(g), any(op.kind is Gate.CZ for op in g), -comps.index(g)))
    if len(best) < 2:
        return None
    template, binding = template_from_ops(best)
    dropped = [op for op in gates if op not in best]
    return template, binding, dropped


def promote(report: PersistenceReport, min_consistency: float = 0.7, now: str | None = None) -> list[PatternEntry]:
    if not 0.0 < min_consistency <= 1.0:
        raise InvalidArgument("min_consistency must lie in (0, 1]")
    stamp = now or _now()
    entries = []
    for seg, count in enumerate(report.flag_counts()):
        if count < 2 or count / report.n_windows < min_consistency:
            continue
        extracted = segment_pattern(report.circuit, seg, report.segment_size)
        if extracted is None:
            continue
        template, binding, dropped = extracted
        segs = segments_of(report.circuit, report.segment_size)
        entries.append(PatternEntry(
            backend_id=report.backend_id,
            qubit_tuple=binding,
            template=template,
            window_ids=tuple(report.window_labels),
            flagged_window_ids=tuple(report.flagged_windows(seg)),
            source_segment={
                "circuit": report.circuit.fingerprint(),
                "segment": seg,
                "moments": [segs[seg].moment_indices.start, segs[seg].moment_indices.stop - 1],
                "ops": [str(op) for op in segs[seg].ops if op.kind is not Gate.MEASURE],
                "dropped_ops": [str(op) for op in dropped],
            },
            metadata={"created": stamp, "updated": stamp},
        ))
    merged = {}
    for e in entries:
        merged[e.key] = _merge_entries(merged[e.key], e) if e.key in merged else e
    return list(merged.values())


# -- scanning ----------------------------------------------------------------

@dataclass(frozen=True)
class Occurrence:
    op_ids: tuple[int, ...]
    pattern_key: str
    positions: tuple[int, ...] = field(default=(), compare=False)

    def to_dict(self) -> dict:
        return {"op_ids": list(self.op_ids), "pattern_key": self.pattern_key, "positions": list(self.positions)}


def scan_entry(circuit: Circuit, entry: PatternEntry, angle_tol: float | None = None) -> list[Occurrence]:
    if entry.backend_id != circuit.backend_id:
        return []
    found = find_occurrences(circuit.ops, entry.template, entry.qubit_tuple, angle_tol)
    return [Occurrence(tuple(circuit.ops[p].id for p in occ), entry.key_text, occ) for occ in found]


def scan(circuit: Circuit, db: PatternDB | Iterable[PatternEntry], angle_tol: float | None = None) -> list[Occurrence]:
    entries = db.entries if isinstance(db, PatternDB) else tuple(db)
    out = []
    for entry in entries:
        out.extend(scan_entry(circuit, entry, angle_tol))
    out.sort(key=lambda o: (min(o.positions), o.pattern_key, o.positions))
    return out
