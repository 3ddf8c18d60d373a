"""Compare the compiled and pure-numpy simplex backends.

Spawns one subprocess per backend (the backend is chosen at import time
from UCINFER_DISABLE_NUMBA), runs an identical workload in each, and
prints a side-by-side table.  Workload: the day-ahead LP relaxation,
full MILP days, and a sweep of small dense LPs.

Usage: python benchmarks/bench_backends.py [--days 3] [--lps 200]
"""

import argparse
import json
import os
import subprocess
import sys
import time


def run_workload(days: int, lps: int) -> dict:
    import numpy as np

    from ucinfer._backend import backend_name
    from ucinfer.forward import PriorConfig, prior_rng, sample_prior, simulate
    from ucinfer.lp import GE, LE, LpBuilder, solve_lp
    from ucinfer.scuc import build_scuc, full_availability
    from ucinfer.system import deterministic_demand, load_bundled

    inst = load_bundled("mini3")
    prior = PriorConfig()
    theta = sample_prior(prior, inst.n_gens, prior_rng(0))
    demand = deterministic_demand(inst.load)
    milp, _ = build_scuc(inst, theta, full_availability(inst), demand)

    # first call pays any JIT compilation; time it separately
    t = time.perf_counter()
    solve_lp(milp.lp)
    warmup = time.perf_counter() - t

    t = time.perf_counter()
    for _ in range(10):
        solve_lp(milp.lp)
    lp_relax = (time.perf_counter() - t) / 10

    t = time.perf_counter()
    for seed in range(days):
        simulate(inst, theta, prior, seed)
    day = (time.perf_counter() - t) / days

    rng = np.random.default_rng(0)
    t = time.perf_counter()
    for _ in range(lps):
        n, m = 12, 8
        bld = LpBuilder()
        for _ in range(n):
            bld.add_var(0.0, rng.uniform(1.0, 10.0), rng.normal())
        for _ in range(m):
            coefs = [(int(j), float(rng.normal()))
                     for j in rng.choice(n, 4, replace=False)]
            bld.add_row(coefs, LE if rng.random() < 0.5 else GE,
                        float(rng.normal()))
        solve_lp(bld.build())
    small = (time.perf_counter() - t) / lps

    return {"backend": backend_name(), "warmup_s": warmup,
            "scuc_lp_relaxation_s": lp_relax, "market_day_s": day,
            "small_lp_s": small}


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--days", type=int, default=3)
    ap.add_argument("--lps", type=int, default=200)
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()

    if args.worker:
        print(json.dumps(run_workload(args.days, args.lps)))
        return 0

    results = []
    for disable in ("0", "1"):
        env = dict(os.environ, UCINFER_DISABLE_NUMBA=disable)
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--worker",
             "--days", str(args.days), "--lps", str(args.lps)],
            capture_output=True, text=True, env=env)
        if proc.returncode != 0:
            sys.stderr.write(proc.stderr)
            return 1
        results.append(json.loads(proc.stdout.strip().splitlines()[-1]))

    a, b = results
    rows = [("warm-up (first solve)", "warmup_s"),
            ("SCUC LP relaxation", "scuc_lp_relaxation_s"),
            ("full market day (MILP)", "market_day_s"),
            ("small dense LP", "small_lp_s")]
    print(f"{'workload':<26}{a['backend']:>12}{b['backend']:>12}{'ratio':>9}")
    for label, key in rows:
        ratio = b[key] / a[key] if a[key] > 0 else float("inf")
        print(f"{label:<26}{a[key]:>11.4f}s{b[key]:>11.4f}s{ratio:>8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
