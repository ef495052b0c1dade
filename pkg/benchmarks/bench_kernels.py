"""Compare the compiled and numpy backends of the backward step.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--dims 1 2 3]

Reports the best wall time of a single slice step and of a full seller solve
per backend, and the largest difference between the two results.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from riskbounds import kernels
from riskbounds.bsde import solve_terminal
from riskbounds.lattice import BrownianLattice, Claim, terminal_values
from riskbounds.market import MarketModel
from riskbounds.penalty import CODE_SELLER_QUAD, DriverKind, Penalty

CASES = {
    1: dict(mu=[0.05], sigma=[[0.2]], steps=2000),
    2: dict(mu=[0.05], sigma=[[0.2, 0.1]], steps=200),
    3: dict(mu=[0.05], sigma=[[0.2, 0.1, 0.05]], steps=40),
}


def best_of(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--dims", type=int, nargs="+", default=sorted(CASES))
    args = ap.parse_args(argv)
    if "cython" not in kernels.AVAILABLE:
        print("compiled kernel not built; only the numpy backend is available")
    backends = kernels.AVAILABLE

    print(f"{'d':>2} {'N':>5} {'what':<10} " + " ".join(f"{b:>10}" for b in backends)
          + f" {'speedup':>8} {'max diff':>10}")
    for d in args.dims:
        case = CASES[d]
        model = MarketModel(mu=case["mu"], sigma=case["sigma"], u=0.5, s0=[100.0],
                            horizon=1.0, steps=case["steps"])
        lattice = BrownianLattice.for_model(model)
        terminal = terminal_values(model, lattice, Claim.call(100.0, cap=200.0))
        kind = DriverKind.seller(Penalty.quadratic(1.0))
        sl = model.slice(lattice.steps - 1)

        step_t, step_out = {}, {}
        for b in backends:
            step_t[b], step_out[b] = best_of(
                lambda: kernels.backward_step(terminal, lattice.dt, CODE_SELLER_QUAD, sl, 1.0, b),
                args.repeat)
        solve_t, solve_out = {}, {}
        for b in backends:
            solve_t[b], solve_out[b] = best_of(
                lambda: solve_terminal(model, lattice, terminal, kind, backend=b), args.repeat)

        for label, times, diff in (
                ("step", step_t, max(float(np.max(np.abs(step_out[b][0] - step_out["python"][0])))
                                     for b in backends)),
                ("solve", solve_t, max(abs(solve_out[b].y0 - solve_out["python"].y0)
                                       for b in backends))):
            speed = times["python"] / times[backends[0]]
            print(f"{d:>2} {lattice.steps:>5} {label:<10} "
                  + " ".join(f"{times[b] * 1e3:>8.2f}ms" for b in backends)
                  + f" {speed:>7.2f}x {diff:>10.2e}")


if __name__ == "__main__":
    main()
