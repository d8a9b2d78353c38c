"""Time the compiled trajectory kernel against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--shots 8192] [--repeats 5]

Both kernels consume the same uniform draws, so their counts must agree
exactly; the script checks that before reporting timings.
"""

import argparse
import statistics
import time

from qpattern.hardware import export_calibration, open_window, preset
from qpattern.kernels import BACKENDS
from qpattern.lowering import grover_circuit, lower_to_native, star_layout
from qpattern.sim import compile_program, run_program


def workloads():
    spec = preset("marrakesh")
    nm = export_calibration(open_window(spec, 0, 0))
    layout, graph = star_layout(7, (6, 8, 17))
    for it in (1, 2):
        c = lower_to_native(grover_circuit("101", it), layout, graph, backend_id=spec.backend_id,
                            num_physical_qubits=156, merge_rz=True)
        yield f"grover-{it}it ({len(c.ops)} ops)", compile_program(c, nm)


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times), statistics.median(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--shots", type=int, default=8192)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    if "compiled" not in BACKENDS:
        print("compiled kernel not built; only the fallback is available")
    print(f"{'workload':28} {'kernel':9} {'best ms':>9} {'median ms':>10} {'speedup':>8}")
    for name, prog in workloads():
        results = {k: run_program(prog, args.shots, 1, k) for k in BACKENDS}
        if len({tuple(sorted(r.probs.items())) for r in results.values()}) != 1:
            raise SystemExit(f"kernels disagree on {name}")
        base = None
        for kernel in ("python", "compiled"):
            if kernel not in BACKENDS:
                continue
            best, med = best_of(lambda: run_program(prog, args.shots, 1, kernel), args.repeats)
            base = base or best
            print(f"{name:28} {kernel:9} {best * 1e3:9.1f} {med * 1e3:10.1f} {base / best:7.1f}x")


if __name__ == "__main__":
    main()
