import json

import pytest

from qpattern.circuit import Circuit, cz, dump_circuit, load_circuit, measure, rz, sx, x
from qpattern.cli import main
from qpattern.experiments import entry_from_rule
from qpattern.hardware import load_backend, preset
from qpattern.patterns import PatternDB, db_load, db_save


def strip_metadata(obj):
    if isinstance(obj, dict):
        return {k: strip_metadata(v) for k, v in obj.items() if k != "metadata"}
    if isinstance(obj, list):
        return [strip_metadata(v) for v in obj]
    return obj


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def fez_files(tmp_path):
    db_path = tmp_path / "fez.db.json"
    db_save(PatternDB((entry_from_rule(preset("fez")),)), db_path)
    dirty = tmp_path / "dirty.txt"
    dump_circuit(Circuit("ibm_fez", 156, (sx(107), rz(0.39, 107), sx(108), cz(108, 107), measure(107))), dirty)
    clean = tmp_path / "clean.txt"
    dump_circuit(Circuit("ibm_fez", 156, (sx(107), x(108), cz(108, 107), measure(107))), clean)
    return db_path, dirty, clean


def test_help_exits_zero(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    assert "discover" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    [],
    ["bogus"],
    ["backend", "atlantis"],
    ["discover", "--preset", "kingston", "--circuit", "c.txt"],
    ["grover", "--preset", "kingston", "--backend", "b.json"],
    ["verify", "--preset", "kingston", "--circuit", "c.txt", "--seed", "x"],
])
def test_usage_errors_exit_two(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2 and "error" in err


def test_domain_errors_exit_one(capsys, tmp_path, fez_files):
    db_path, dirty, _ = fez_files
    code, _, err = run(capsys, "scan", "--circuit", tmp_path / "missing.txt", "--db", db_path)
    assert code == 1 and err.startswith("error:")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert run(capsys, "scan", "--circuit", dirty, "--db", bad)[0] == 1
    garbage = tmp_path / "garbage.txt"
    garbage.write_text("backend: x; qubits: 2;\nfoo q0;\n")
    assert run(capsys, "scan", "--circuit", garbage, "--db", db_path)[0] == 1
    assert run(capsys, "grover", "--preset", "kingston", "--marked", "1x1")[0] == 1


def test_backend_and_grover(capsys, tmp_path, grover_1):
    spec_path = tmp_path / "kingston.json"
    assert run(capsys, "backend", "kingston", "--out", spec_path)[0] == 0
    assert load_backend(spec_path) == preset("kingston")
    circ = tmp_path / "g.txt"
    assert run(capsys, "grover", "--backend", spec_path, "--iterations", 1, "--out", circ)[0] == 0
    assert load_circuit(circ).ops == grover_1.ops
    code, out, _ = run(capsys, "grover", "--preset", "kingston", "--iterations", 1, "--format", "json")
    assert code == 0 and len(json.loads(out)["ops"]) == len(grover_1.ops)


def test_scan_and_transform(capsys, tmp_path, fez_files):
    db_path, dirty, clean = fez_files
    code, out, _ = run(capsys, "scan", "--circuit", dirty, "--db", db_path)
    assert code == 0 and json.loads(out)["count"] == 1
    rewritten = tmp_path / "out.txt"
    code, out, _ = run(capsys, "transform", "--circuit", dirty, "--db", db_path, "--circuit-out", rewritten)
    report = json.loads(out)
    assert code == 0 and report["disrupted"] == 1 and len(report["swaps_applied"]) == 1
    assert json.loads(run(capsys, "scan", "--circuit", rewritten, "--db", db_path)[1])["count"] == 0
    code, out, _ = run(capsys, "transform", "--circuit", clean, "--db", db_path)
    assert code == 0 and json.loads(out)["disrupted"] == 0


def test_no_excess_is_success(capsys, tmp_path, grover_1):
    circ = tmp_path / "g.txt"
    dump_circuit(grover_1, circ)
    code, out, _ = run(capsys, "discover", "--preset", "kingston", "--circuit", circ, "--seed", 1)
    assert code == 0 and json.loads(out)["status"] == "no_excess"


def test_reruns_are_identical(capsys, tmp_path, grover_1, fez_files):
    circ = tmp_path / "g.txt"
    dump_circuit(grover_1, circ)
    db_path, dirty, _ = fez_files
    commands = [
        ["calibrate", "--preset", "kingston", "--circuit", circ, "--seed", 4, "--shots", 2000],
        ["discover", "--preset", "kingston", "--circuit", circ, "--seed", 4, "--shots", 2000],
        ["transform", "--circuit", dirty, "--db", db_path],
        ["experiment", "--preset", "marrakesh", "--seed", 1, "--circuits-per-group", 2, "--shots", 500],
    ]
    for argv in commands:
        first, second = run(capsys, *argv)[1], run(capsys, *argv)[1]
        assert json.dumps(strip_metadata(json.loads(first))) == json.dumps(strip_metadata(json.loads(second)))


def test_verify_promote_pipeline(capsys, tmp_path, grover_1):
    circ = tmp_path / "g.txt"
    dump_circuit(grover_1, circ)
    report, table, db_path = tmp_path / "r.json", tmp_path / "r.csv", tmp_path / "db" / "p.json"
    code, _, _ = run(capsys, "verify", "--preset", "kingston", "--circuit", circ, "--windows", 2, "--seed", 3,
                     "--jobs", 1, "--shots", 2000, "--out", report, "--csv", table)
    assert code == 0
    data = json.loads(report.read_text())
    assert data["window_labels"] == ["3:0", "3:1"]
    assert table.read_text().startswith("segment,moments,windows_flagged,windows_total,consistency")
    code, out, _ = run(capsys, "promote", "--report", report, "--db", db_path)
    assert code == 0 and json.loads(out)["promoted"] == []
    assert db_load(db_path) == PatternDB()


def test_db_merge_command(capsys, tmp_path, fez_files):
    db_path, _, _ = fez_files
    other = tmp_path / "m.json"
    db_save(PatternDB((entry_from_rule(preset("marrakesh")),)), other)
    merged = tmp_path / "merged.json"
    code, out, _ = run(capsys, "db-merge", db_path, other, "--db", merged)
    assert code == 0 and len(json.loads(out)["database"]["entries"]) == 2
    assert len(db_load(merged).entries) == 2


def test_experiment_writes_outputs(capsys, tmp_path):
    outdir = tmp_path / "exp"
    code, out, err = run(capsys, "experiment", "--preset", "kingston", "--rule-from", "marrakesh", "--seed", 0,
                         "--circuits-per-group", 2, "--shots", 500, "--out-dir", outdir)
    assert code == 0 and "rho=" in err
    assert sorted(p.name for p in outdir.iterdir()) == ["scaling.dat", "scaling.json", "scaling_rows.csv",
                                                        "scaling_table.csv"]
    assert json.loads(out)["backend_id"] == "ibm_kingston"
    assert run(capsys, "experiment", "--preset", "kingston", "--seed", 0)[0] == 1
