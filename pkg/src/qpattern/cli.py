"""Command-line entry point, one subcommand per stage.

Reports go to stdout (or ``--out``) as JSON with sorted keys; anything that
varies between identical runs, such as timings and timestamps, lives under a
``metadata`` key. Short human-readable summaries go to stderr.

Exit codes: 0 success (including a ``no_excess`` discovery), 1 domain error,
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from .circuit import circuit_to_dict, dump_circuit, load_circuit, serialize_circuit
from .ddmin import discover
from .errors import QPatternError
from .experiments import entry_from_rule, injection_workload, scaling_experiment
from .hardware import BackendSpec, export_calibration, load_backend, open_window, preset
from .lowering import grover_circuit, lower_to_native, star_layout
from .oracle import OracleConfig, calibrate
from .patterns import PatternDB, PersistenceReport, db_add, db_load, db_merge, db_save, promote, scan, verify
from .seeds import derive_seed
from .transform import disrupt


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _emit(payload: dict, out: str | None, started: float) -> None:
    payload = dict(payload)
    meta = dict(payload.get("metadata", {}))
    meta.update({"elapsed_s": round(time.perf_counter() - started, 6),
                 "finished": datetime.now(timezone.utc).replace(microsecond=0).isoformat(),
                 "tool": "qpattern"})
    payload["metadata"] = meta
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _note(msg: str) -> None:
    print(msg, file=sys.stderr)


def _backend(args) -> BackendSpec:
    if getattr(args, "backend", None):
        return load_backend(args.backend)
    if getattr(args, "preset", None):
        return preset(args.preset)
    raise UsageError("one of --backend or --preset is required")


def _cfg(args) -> OracleConfig:
    return OracleConfig(shots=args.shots, null_runs=args.null_runs)


# -- commands ----------------------------------------------------------------

def cmd_backend(args):
    spec = preset(args.name, excess=args.excess, sigma_mult=args.sigma_mult, transient_prob=args.transient_prob)
    text = spec.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        sys.stdout.write(text + "\n")
    _note(f"{spec.backend_id}: {len(spec.hidden_rules)} hidden rule(s)")


def cmd_grover(args):
    spec = _backend(args)
    if args.inject_site is not None:
        circuit = injection_workload(spec, marked=args.marked, iterations=args.iterations,
                                     segment_size=args.segment_size, site=args.inject_site).circuit
    else:
        hubs = [q for q in spec.graph.qubits if len(spec.graph.neighbors(q)) >= 3]
        if not hubs:
            raise QPatternError("backend graph has no hub coupled to three qubits")
        leaves = sorted(spec.graph.neighbors(hubs[0]))[:3]
        layout, graph = star_layout(hubs[0], leaves)
        circuit = lower_to_native(grover_circuit(args.marked, args.iterations), layout, graph,
                                  backend_id=spec.backend_id, num_physical_qubits=spec.num_physical_qubits,
                                  merge_rz=args.merge_rz)
    if args.out:
        dump_circuit(circuit, args.out)
    elif args.format == "json":
        sys.stdout.write(json.dumps(circuit_to_dict(circuit), sort_keys=True, indent=2) + "\n")
    else:
        sys.stdout.write(serialize_circuit(circuit))
    _note(f"{len(circuit.ops)} ops on {sorted(circuit.used_qubits)}")


def cmd_calibrate(args, started):
    spec = _backend(args)
    circuit = load_circuit(args.circuit)
    window = open_window(spec, args.window, args.seed)
    cal = calibrate(circuit, export_calibration(window), _cfg(args), derive_seed(args.seed, "calibrate"))
    _emit({"backend_id": spec.backend_id, "window": args.window, "calibration": cal.to_dict()}, args.out, started)
    _note(f"tau={cal.tau:.4f} tvd_min={cal.tvd_min:.4f}")


def cmd_discover(args, started):
    spec = _backend(args)
    circuit = load_circuit(args.circuit)
    window = open_window(spec, args.window, args.seed)
    res = discover(circuit, window, _cfg(args), args.segment_size, args.seed, args.n_max)
    _emit(res.to_dict(), args.out, started)
    _note(f"status={res.status} flagged={res.flagged_segments} R={res.baseline_R:.3f}")


def cmd_verify(args, started):
    spec = _backend(args)
    circuit = load_circuit(args.circuit)
    report = verify(circuit, spec, args.windows, _cfg(args), args.seed, args.segment_size,
                    jobs=args.jobs, first_window=args.first_window)
    _emit(report.to_dict(), args.out, started)
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    flagged = {s: c for s, c in enumerate(report.flag_counts()) if c}
    _note(f"flag counts over {args.windows} windows: {flagged}")


def cmd_promote(args, started):
    report = PersistenceReport.from_dict(json.loads(Path(args.report).read_text()))
    stamp = datetime.now(timezone.utc).replace(microsecond=0).isoformat()
    entries = promote(report, args.min_consistency, now=stamp)
    db = db_load(args.db) if args.db and Path(args.db).exists() else PatternDB()
    db = db_add(db, entries)
    if args.db:
        db_save(db, args.db)
    _emit({"promoted": [e.to_dict() for e in entries], "database": db.to_dict()}, args.out, started)
    _note(f"promoted {len(entries)} pattern(s); database holds {len(db.entries)}")


def cmd_db_merge(args, started):
    db = PatternDB()
    for path in args.inputs:
        db = db_merge(db, db_load(path))
    if args.db:
        db_save(db, args.db)
    _emit({"database": db.to_dict()}, args.out, started)
    _note(f"merged database holds {len(db.entries)} pattern(s)")


def cmd_scan(args, started):
    circuit = load_circuit(args.circuit)
    db = db_load(args.db)
    occs = scan(circuit, db, args.angle_tol)
    _emit({"circuit": circuit.fingerprint(), "count": len(occs), "occurrences": [o.to_dict() for o in occs]},
          args.out, started)
    _note(f"{len(occs)} occurrence(s)")


def cmd_transform(args, started):
    circuit = load_circuit(args.circuit)
    db = db_load(args.db)
    res = disrupt(circuit, db, max_disruptions=args.max_disruptions)
    if args.circuit_out:
        dump_circuit(res.circuit, args.circuit_out)
    payload = res.to_dict()
    payload["circuit"] = circuit_to_dict(res.circuit)
    _emit(payload, args.out, started)
    _note(f"disrupted {res.disrupted} of {res.initial}; {len(res.undisruptable)} undisruptable")


def cmd_experiment(args, started):
    spec = _backend(args)
    if args.db:
        db = db_load(args.db)
        entries = list(db.entries)
        if args.pattern:
            entries = [e for e in entries if e.key_text == args.pattern]
        if not entries:
            raise QPatternError("no matching pattern in the database")
        entry = entries[0]
    else:
        source = preset(args.rule_from) if args.rule_from else spec
        if not source.hidden_rules:
            raise QPatternError("no pattern given and the backend has no rule to take one from")
        entry = entry_from_rule(source)
    res = scaling_experiment(spec, entry, args.circuits_per_group, args.seed, args.shots)
    if args.out_dir:
        res.write(args.out_dir)
    _emit(res.to_dict(), args.out, started)
    s = res.stats
    _note(f"rho={s['hw']['rho']:.3f} p={s['hw']['p']:.2g} mwu_p={s['mwu']['p']:.2g} "
          f"reduction={s['relative_reduction']:.1%}")


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qpattern", description="Find, verify, store and disrupt error-prone gate patterns.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def backend_opts(sp):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--backend", help="backend spec JSON file")
        g.add_argument("--preset", choices=["fez", "marrakesh", "kingston"], help="built-in mock backend")

    def oracle_opts(sp):
        sp.add_argument("--shots", type=int, default=8192, help="shots per execution (default 8192)")
        sp.add_argument("--null-runs", type=int, default=5, help="noisy-vs-noisy runs for tau (default 5)")
        sp.add_argument("--segment-size", type=int, default=3, help="moments per segment (default 3)")

    def out_opt(sp):
        sp.add_argument("--out", help="write the JSON report here instead of stdout")

    def seed_opt(sp):
        sp.add_argument("--seed", type=int, required=True, help="master seed (required)")

    sp = sub.add_parser("backend", help="write a preset mock backend spec")
    sp.add_argument("name", choices=["fez", "marrakesh", "kingston"])
    sp.add_argument("--excess", type=float, default=0.05, help="hidden-rule excess depolarizing probability")
    sp.add_argument("--sigma-mult", type=float, default=0.05, help="per-window calibration jitter")
    sp.add_argument("--transient-prob", type=float, default=0.0, help="chance of a transient rule per window")
    sp.add_argument("--out", help="output file (default stdout)")

    sp = sub.add_parser("grover", help="lower a 3-qubit Grover search onto the backend's star")
    backend_opts(sp)
    sp.add_argument("--marked", default="101", help="marked 3-bit string (default 101)")
    sp.add_argument("--iterations", type=int, default=2, help="Grover iterations (default 2)")
    sp.add_argument("--merge-rz", action="store_true", help="fuse adjacent rz gates")
    sp.add_argument("--inject-site", type=int, help="splice an identity gadget carrying the backend rule "
                                                     "at this valid site (implies --merge-rz)")
    sp.add_argument("--segment-size", type=int, default=6, help="segment size used to pick injection sites")
    sp.add_argument("--format", choices=["text", "json"], default="text", help="stdout format")
    sp.add_argument("--out", help="circuit file (.json for JSON, text otherwise)")

    sp = sub.add_parser("calibrate", help="estimate tau and the denominator floor for a circuit")
    backend_opts(sp)
    sp.add_argument("--circuit", required=True)
    sp.add_argument("--window", type=int, default=0, help="calibration window index")
    oracle_opts(sp)
    seed_opt(sp)
    out_opt(sp)

    sp = sub.add_parser("discover", help="run delta debugging in one calibration window")
    backend_opts(sp)
    sp.add_argument("--circuit", required=True)
    sp.add_argument("--window", type=int, default=0, help="calibration window index")
    sp.add_argument("--n-max", type=int, default=16, help="maximum granularity")
    oracle_opts(sp)
    seed_opt(sp)
    out_opt(sp)

    sp = sub.add_parser("verify", help="repeat discovery across calibration windows")
    backend_opts(sp)
    sp.add_argument("--circuit", required=True)
    sp.add_argument("--windows", type=int, default=10, help="number of windows (>= 2)")
    sp.add_argument("--first-window", type=int, default=0, help="index of the first window")
    sp.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker processes (default: cores)")
    sp.add_argument("--csv", help="also write the per-segment table as CSV")
    oracle_opts(sp)
    seed_opt(sp)
    out_opt(sp)

    sp = sub.add_parser("promote", help="turn a verification report into database entries")
    sp.add_argument("--report", required=True, help="verify JSON report")
    sp.add_argument("--min-consistency", type=float, default=0.7, help="minimum flagged fraction")
    sp.add_argument("--db", help="database file to update (created if missing)")
    out_opt(sp)

    sp = sub.add_parser("db-merge", help="merge pattern databases")
    sp.add_argument("inputs", nargs="+", help="database files")
    sp.add_argument("--db", help="write the merged database here")
    out_opt(sp)

    sp = sub.add_parser("scan", help="list pattern occurrences in a circuit")
    sp.add_argument("--circuit", required=True)
    sp.add_argument("--db", required=True)
    sp.add_argument("--angle-tol", type=float, help="also match rz angles within this tolerance")
    out_opt(sp)

    sp = sub.add_parser("transform", help="break pattern occurrences with commuting swaps")
    sp.add_argument("--circuit", required=True)
    sp.add_argument("--db", required=True)
    sp.add_argument("--max-disruptions", type=int, help="break at most this many occurrences")
    sp.add_argument("--circuit-out", help="also write the rewritten circuit here")
    out_opt(sp)

    sp = sub.add_parser("experiment", help="survivor-count scaling experiment in one window")
    backend_opts(sp)
    sp.add_argument("--db", help="pattern database; defaults to the backend's own rule")
    sp.add_argument("--pattern", help="pattern key to use from --db")
    sp.add_argument("--rule-from", choices=["fez", "marrakesh"], help="take the pattern from this preset's rule")
    sp.add_argument("--circuits-per-group", type=int, default=10, help="base circuits (default 10)")
    sp.add_argument("--shots", type=int, default=8192, help="shots per execution (default 8192)")
    sp.add_argument("--out-dir", help="write JSON, CSV and gnuplot data files here")
    seed_opt(sp)
    out_opt(sp)
    return p


COMMANDS = {
    "calibrate": cmd_calibrate, "discover": cmd_discover, "verify": cmd_verify, "promote": cmd_promote,
    "db-merge": cmd_db_merge, "scan": cmd_scan, "transform": cmd_transform, "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    started = time.perf_counter()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "backend":
            cmd_backend(args)
        elif args.command == "grover":
            cmd_grover(args)
        else:
            COMMANDS[args.command](args, started)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except (QPatternError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
