"""Time the compiled and pure-Python sweep kernels on the same grid.

    python3 benchmarks/bench_kernel.py --sweeps 400 --matches 200

Both backends run the identical chain; the script checks the draws agree
bit for bit before reporting per-sweep cost and the speedup.
"""
from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from bayesdl.corpus import aggregate
from bayesdl.model import Parametrization, PriorSpec
from bayesdl.sampler import McmcConfig, available_backends, run_chain
from bayesdl.synth import SynthConfig, simulate


def time_backend(grid, spec, cfg, backend, repeats):
    times, last = [], None
    for _ in range(repeats):
        t0 = time.perf_counter()
        last = run_chain(grid, spec, cfg, backend=backend)
        times.append(time.perf_counter() - t0)
    return statistics.median(times), last


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sweeps", type=int, default=400, help="sweeps per run (half burn-in, half kept)")
    p.add_argument("--matches", type=int, default=200, help="synthetic matches behind the grid")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--prior", choices=[m.value for m in Parametrization], default="ab")
    args = p.parse_args(argv)

    grid = aggregate(simulate(SynthConfig(n_matches=args.matches, seed=1)))
    spec = PriorSpec(parametrization=args.prior)
    half = max(args.sweeps // 2, 1)
    cfg = McmcConfig(burn_in=half, keep=half, seed=0)
    print(f"grid: {args.matches} matches, {int(grid.missing.sum())} missing cells; "
          f"{cfg.total_sweeps} sweeps, prior {args.prior}")

    results = {}
    for backend in available_backends():
        elapsed, samples = time_backend(grid, spec, cfg, backend, args.repeats)
        results[backend] = (elapsed, samples)
        print(f"{backend:>9}: {elapsed:8.3f} s total, {1e3 * elapsed / cfg.total_sweeps:8.3f} ms/sweep")

    if len(results) == 2:
        (tc, sc), (tp, sp) = results["compiled"], results["python"]
        same = all(np.array_equal(getattr(sc, f), getattr(sp, f)) for f in ("a", "b", "sigma2", "imputed"))
        print(f"  speedup: {tp / tc:.1f}x; draws identical: {same}")
        return 0 if same else 1
    print("  compiled kernel unavailable; only the Python backend was timed")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
