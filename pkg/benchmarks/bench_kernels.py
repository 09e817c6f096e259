"""Time the compiled stencil kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each row times one step kernel (per call) or a short forward plus adjoint
sweep, and checks that both backends return the same numbers.
"""

import argparse
import json
import sys
import timeit

import numpy as np

from hjlab import hamiltonian as hm
from hjlab.adjoint import solve_adjoint
from hjlab.grid import PeriodicGrid
from hjlab.kernels import Stepper, available_backends
from hjlab.solver import solve_viscous

CASES = [
    ("quartic 1d", hm.quartic_double_well(1), 1, 1024),
    ("product_ck 1d", hm.product_ck(1), 1, 1024),
    ("quartic_minus_quadratic 2d", hm.quartic_minus_quadratic(2), 2, 128),
]


def datum(grid):
    x = grid.coords()
    return np.ascontiguousarray(0.1 * np.prod(np.sin(2 * np.pi * x), axis=-1))


def time_call(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def bench_steps(model, grid, repeat):
    u = datum(grid)
    s = np.full(grid.shape, 1.0)
    S = np.stack([s] * 4)
    rows = []
    outs = {}
    for be in available_backends():
        st = Stepper(model, grid, be)
        buf = np.empty_like(u)
        ops = {
            "viscous": lambda: st.viscous(u, 1e-6, 0.02, out=buf),
            "adjoint": lambda: st.adjoint(u, s, 1e-6, 0.02, out=buf),
            "tangent": lambda: st.tangent(u, s, 1e-6, 0.02, out=buf),
            "lf": lambda: st.lf(u, 1e-6, 2.0, out=buf),
            "secant x4": lambda: st.secant_adjoint(u, 1.01 * u, S, 1e-6, 0.02),
            "speeds": lambda: st.speeds(u),
        }
        for op, fn in ops.items():
            rows.append({"backend": be, "op": op, "seconds": time_call(fn, repeat, 200)})
            res = fn()
            outs[(be, op)] = np.array(res, dtype=float, copy=True)
    for op in ("viscous", "adjoint", "tangent", "lf", "secant x4", "speeds"):
        vals = [outs[(be, op)] for be in available_backends()]
        dev = max(float(np.max(np.abs(v - vals[0]))) for v in vals)
        for r in rows:
            if r["op"] == op:
                r["max_abs_diff"] = dev
    return rows


def bench_sweep(model, grid, repeat):
    g = grid.field(datum(grid))
    z = [0.3] * grid.dim
    rows = []
    for be in available_backends():
        def sweep():
            r = solve_viscous(model, g, 0.02, 0.02, backend=be)
            solve_adjoint(r, z, retain="none")
        rows.append({"backend": be, "op": "forward+adjoint", "seconds": time_call(sweep, max(1, repeat // 2), 1)})
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", default=None)
    args = ap.parse_args(argv)
    if len(available_backends()) < 2:
        print("compiled backend not built; only numpy is available", file=sys.stderr)
    table = []
    for label, model, n, N in CASES:
        grid = PeriodicGrid(n, N)
        for r in bench_steps(model, grid, args.repeat) + bench_sweep(model, grid, args.repeat):
            table.append({"case": label, "N": N, **r})
    base = {(r["case"], r["op"]): r["seconds"] for r in table if r["backend"] == "numpy"}
    print(f"{'case':30s} {'op':16s} {'backend':8s} {'time':>11s} {'speedup':>8s} {'max diff':>9s}")
    for r in table:
        r["speedup"] = base[(r["case"], r["op"])] / r["seconds"]
        diff = f"{r['max_abs_diff']:.1e}" if "max_abs_diff" in r else ""
        print(f"{r['case']:30s} {r['op']:16s} {r['backend']:8s} {r['seconds'] * 1e6:9.1f}us "
              f"{r['speedup']:7.1f}x {diff:>9s}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(table, fh, indent=2)


if __name__ == "__main__":
    main()
