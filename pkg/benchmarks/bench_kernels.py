"""Benchmark the compiled operator kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--paths N] [--nodes N] [--reps N]
"""

import argparse
import time

import numpy as np

from mmdiv import kernels
from mmdiv.model import DividendClock, ModelSpec, Regime, JumpLaw
from mmdiv.sampling import sample_epoch_bundle
from mmdiv.solver import make_grid


def build_case(n_paths, n_nodes):
    spec = ModelSpec(
        ("calm", "stressed"),
        [[-0.5, 0.5], [0.5, -0.5]],
        (Regime(1.0, 0.5), Regime(-0.5, 1.0, 0.2, JumpLaw("exp_down", mean=1.0))),
        [0.08, 0.12], 1.3)
    clock = DividendClock("exponential", rate=2.0)
    grid = make_grid(6.0, n_nodes)
    bundle = sample_epoch_bundle(spec, clock, 0, n_paths, dt=0.0025, seed=3)
    F = np.vstack([grid.x * 0.9 + 1.0, grid.x * 0.8])
    D = np.vstack([np.maximum(1.2 - 0.1 * grid.x, 0.3),
                   np.maximum(1.1 - 0.1 * grid.x, 0.3)])
    slope_hi = np.array([0.9, 0.8])
    return spec, grid, bundle, F, D, slope_hi


def run(impl, which, grid, bundle, F, D, slope_hi, beta, reps):
    args = (bundle.offsets, bundle.rec_m, bundle.rec_disc, bundle.xi_end,
            bundle.disc_end, bundle.y_end, grid.x)
    best = np.inf
    out = None
    for _ in range(reps):
        t0 = time.perf_counter()
        if which == "value":
            out = impl.value_terms(*args, F, slope_hi, beta)
        else:
            out = impl.deriv_terms(*args, D, beta)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=20000)
    ap.add_argument("--nodes", type=int, default=241)
    ap.add_argument("--reps", type=int, default=5)
    args = ap.parse_args()

    spec, grid, bundle, F, D, slope_hi = build_case(args.paths, args.nodes)
    backends = {}
    for name in ("compiled", "fallback"):
        try:
            backends[name] = kernels.get_backend(name)[0]
        except (ImportError, ValueError) as exc:
            print(f"{name}: unavailable ({exc})")
    print(f"paths={args.paths} nodes={args.nodes} "
          f"records={bundle.rec_m.size} (best of {args.reps})")
    results = {}
    for which in ("value", "deriv"):
        for name, impl in backends.items():
            dt, out = run(impl, which, grid, bundle, F, D, slope_hi,
                          spec.beta, args.reps)
            results[(which, name)] = (dt, out)
            print(f"  {which:5s} {name:9s} {dt * 1e3:9.2f} ms")
        if len(backends) == 2:
            a = results[(which, "compiled")]
            b = results[(which, "fallback")]
            agree = np.allclose(a[1], b[1], rtol=1e-9, atol=1e-7)
            print(f"  {which:5s} speedup {b[0] / a[0]:6.1f}x  "
                  f"outputs agree: {agree}")


if __name__ == "__main__":
    main()
