"""Batch command-line front end.

Subcommands: solve, verify, simulate, sweep-det, sweep-poisson.  Every command
is a pure function of (config file, seed): reruns write byte-identical CSVs.
Exit codes: 0 success, 1 a checked property failed beyond tolerance, 2 usage
or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .barriers import check_xi_membership, estimate_rho, mixing_probability
from .config import ConfigError, RunConfig, load_config
from .engine import default_horizon
from .model import epoch_discount_factor
from .sampling import default_dt
from .solver import (GridCapError, SolverConvergenceError, default_x_max,
                     make_grid, value_iterate)
from .strategy import barrier_rule, estimate_npv, simulate_epoch_rule

__all__ = ["main"]


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _grid_for(cfg: RunConfig):
    x_max = cfg.x_max
    if x_max is None:
        x_max = default_x_max(cfg.spec, cfg.clock)
    return make_grid(x_max, cfg.n_nodes)


def _dt_for(cfg: RunConfig) -> float:
    return cfg.dt if cfg.dt is not None else default_dt(cfg.clock)


def _solve(cfg: RunConfig, keep_bundles: bool = False):
    return value_iterate(cfg.spec, cfg.clock, _grid_for(cfg),
                         n_paths=cfg.n_paths, dt=cfg.dt, seed=cfg.seed,
                         keep_bundles=keep_bundles)


def _write_solution(out: Path, cfg: RunConfig, result):
    spec = cfg.spec
    grid = result.value.grid
    rows = []
    for s, name in enumerate(spec.states):
        for i, x in enumerate(grid.x):
            rows.append((name, x, result.value.values[s, i],
                         result.value.derivs[s, i]))
    _write_csv(out / "values.csv", ["state", "x", "V", "dV"], rows)
    _write_csv(out / "barriers.csv",
               ["state", "b_lower", "b_upper", "flags"],
               [(name, result.barriers.lower[s], result.barriers.upper[s],
                 "at_cap" if result.barriers.at_cap[s] else "")
                for s, name in enumerate(spec.states)])
    _write_csv(out / "convergence.csv", ["iter", "sup_change"],
               list(enumerate(result.sup_changes, start=1)))


def cmd_solve(cfg: RunConfig, out: Path) -> int:
    try:
        result = _solve(cfg)
    except (SolverConvergenceError, GridCapError) as exc:
        print(f"solve failed: {exc}", file=sys.stderr)
        return 1
    _write_solution(out, cfg, result)
    print(f"converged in {result.n_iter} sweeps; "
          f"contraction ~ {result.contraction_estimate:.4f}")
    return 0


def _read_barrier_file(path: Path, cfg: RunConfig) -> np.ndarray:
    levels = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            levels[row["state"]] = float(row["b_lower"])
    missing = [s for s in cfg.spec.states if str(s) not in levels]
    if missing:
        raise ConfigError([f"{path}: missing barrier rows for states "
                           f"{missing}"])
    return np.array([levels[str(s)] for s in cfg.spec.states])


def cmd_verify(cfg: RunConfig, out: Path, barrier_file: str) -> int:
    barrier = _read_barrier_file(Path(barrier_file), cfg)
    verdict = check_xi_membership(cfg.spec, cfg.clock, barrier,
                                  n_paths=cfg.n_paths, dt=_dt_for(cfg),
                                  seed=cfg.seed)
    rows = []
    for e in verdict:
        try:
            p = mixing_probability(e.rho1, e.rho2)
        except ValueError:
            p = float("nan")
        rows.append((cfg.spec.states[e.state], barrier[e.state],
                     e.rho1.value, e.rho1.se, e.rho2.value, e.rho2.se,
                     e.verdict, "" if e.reachable else "mass-null", p))
    _write_csv(out / "verdicts.csv",
               ["state", "b", "rho1", "rho1_se", "rho2", "rho2_se",
                "verdict", "flags", "p_b"], rows)
    print(f"profile verdict: {verdict.xi_member} "
          f"(mass-positive states only: {verdict.hat_xi_member})")
    if verdict.hat_xi_member == "yes":
        return 0
    failing = [str(cfg.spec.states[e.state]) for e in verdict
               if e.verdict != "yes" and e.reachable]
    print(f"failing states: {', '.join(failing)}", file=sys.stderr)
    return 1


def cmd_simulate(cfg: RunConfig, out: Path, strategy: str,
                 barrier_file: str | None, x0_list, y0_list) -> int:
    spec, clock = cfg.spec, cfg.clock
    dt = _dt_for(cfg)
    horizon = cfg.horizon_epochs or default_horizon(spec, clock)
    if strategy == "mmpcb":
        if barrier_file is None:
            barrier = _solve(cfg).barriers.lower
        else:
            barrier = _read_barrier_file(Path(barrier_file), cfg)
        rule = barrier_rule(barrier)
        scale = float(barrier.max())
    elif strategy == "never-pay":
        rule = barrier_rule(np.full(spec.n_states, 1e18))
        scale = 1.0
    elif strategy in ("pay-all", "pay-all-at-0-barrier"):
        rule = barrier_rule(np.zeros(spec.n_states))
        scale = 1.0
    else:
        raise ConfigError([f"unknown strategy {strategy!r} "
                           "(expected mmpcb, never-pay or pay-all)"])
    rows = []
    for y0 in y0_list:
        for x0 in x0_list:
            res = simulate_epoch_rule(spec, clock, rule, x0, y0,
                                      cfg.n_paths, dt, seed=cfg.seed,
                                      horizon_epochs=horizon)
            est = estimate_npv(res, spec, clock, x0, barrier_scale=scale)
            rows.append((spec.states[y0], x0, est.mean, est.se,
                         est.horizon_epochs, est.bias_bound))
    _write_csv(out / "npv.csv",
               ["state", "x0", "npv", "se", "horizon_epochs", "bias_bound"],
               rows)
    print(f"wrote {len(rows)} NPV rows")
    return 0


def _probe_points(grid, barriers) -> np.ndarray:
    top = max(float(barriers.upper.max()) + 1.0, 2.0)
    top = min(top, grid.x_max)
    return np.linspace(0.0, top, 5)


def _run_sweep(cfg: RunConfig, out: Path, clocks, labels) -> int:
    spec = cfg.spec
    grid = _grid_for(cfg)
    probes = None
    rows = []
    summaries = []
    for n, clock in zip(labels, clocks):
        result = value_iterate(spec, clock, grid, n_paths=cfg.n_paths,
                               dt=cfg.dt, seed=cfg.seed, dual=False)
        if probes is None:
            probes = _probe_points(grid, result.barriers)
        r = epoch_discount_factor(spec, clock, 0, seed=cfg.seed)
        summaries.append((n, result, r))
        for s, name in enumerate(spec.states):
            vals = np.interp(probes, grid.x, result.value.values[s])
            rows.append((n, name, result.barriers.lower[s],
                         result.barriers.upper[s], *vals))
    head = ["n", "state", "b_lower", "b_upper"] + \
        [f"V_at_{p:.4g}" for p in probes]
    _write_csv(out / "sweep.csv", head, rows)

    # Monotonicity assertions: values nondecreasing pointwise within
    # max(3*SE proxy, grid error); lower barriers nondecreasing within one
    # grid cell.
    h = grid.h
    ok = True
    for (n_a, res_a, _), (n_b, res_b, _) in zip(summaries, summaries[1:]):
        val_tol = max(0.02 * max(1.0, float(np.abs(res_b.value.values).max())),
                      h)
        drop = res_a.value.values - res_b.value.values
        if drop.max() > val_tol:
            s, i = np.unravel_index(np.argmax(drop), drop.shape)
            print(f"value monotonicity violated at n={n_b}, state "
                  f"{spec.states[s]}, x={grid.x[i]:.4f} "
                  f"(drop {drop[s, i]:.4g} > tol {val_tol:.4g})",
                  file=sys.stderr)
            ok = False
        bdrop = res_a.barriers.lower - res_b.barriers.lower
        if bdrop.max() > h + 1e-12:
            s = int(np.argmax(bdrop))
            print(f"barrier monotonicity violated at n={n_b}, state "
                  f"{spec.states[s]} (drop {bdrop[s]:.4g} > {h:.4g})",
                  file=sys.stderr)
            ok = False
    last = summaries[-1][1]
    print("limit barrier estimate per state: "
          + ", ".join(f"{spec.states[s]}: {last.barriers.lower[s]:.4f}"
                      for s in range(spec.n_states)))
    return 0 if ok else 1


def cmd_sweep_det(cfg: RunConfig, out: Path, n_max: int) -> int:
    from .model import DividendClock
    labels = list(range(n_max + 1))
    clocks = [DividendClock("deterministic", delta=2.0 ** (-n))
              for n in labels]
    return _run_sweep(cfg, out, clocks, labels)


def cmd_sweep_poisson(cfg: RunConfig, out: Path, n_max: int) -> int:
    from .model import DividendClock
    labels = list(range(1, n_max + 1))
    clocks = [DividendClock("exponential", rate=float(n)) for n in labels]
    return _run_sweep(cfg, out, clocks, labels)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="mmdiv",
        description="Periodic-dividend barrier solver and simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="TOML run config")
        sp.add_argument("--seed", type=int, default=None,
                        help="override mc.seed")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--paths", type=int, default=None,
                        help="override mc.n_paths")
        sp.add_argument("--dt", type=float, default=None,
                        help="override mc.dt")

    common(sub.add_parser("solve", help="run value iteration, write CSVs"))

    sp = sub.add_parser("verify", help="check a barrier profile")
    common(sp)
    sp.add_argument("--barriers", required=True,
                    help="barriers.csv with state,b_lower columns")

    sp = sub.add_parser("simulate", help="Monte-Carlo NPV of a strategy")
    common(sp)
    sp.add_argument("--strategy", default="mmpcb",
                    help="mmpcb | never-pay | pay-all")
    sp.add_argument("--barriers", default=None,
                    help="barrier file for mmpcb (default: solve first)")
    sp.add_argument("--x0", default="0,1,2",
                    help="comma-separated initial capitals")
    sp.add_argument("--y0", default=None,
                    help="comma-separated state indices (default: all)")

    for name in ("sweep-det", "sweep-poisson"):
        sp = sub.add_parser(name, help="clock-refinement sweep")
        common(sp)
        sp.add_argument("--n-max", type=int, required=True)

    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = _replace(cfg, seed=args.seed)
        if args.paths is not None:
            if args.paths <= 0:
                raise ConfigError(["--paths must be positive"])
            cfg = _replace(cfg, n_paths=args.paths)
        if args.dt is not None:
            if args.dt <= 0:
                raise ConfigError(["--dt must be positive"])
            cfg = _replace(cfg, dt=args.dt)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)

        if args.command == "solve":
            return cmd_solve(cfg, out)
        if args.command == "verify":
            return cmd_verify(cfg, out, args.barriers)
        if args.command == "simulate":
            x0_list = [float(v) for v in args.x0.split(",") if v != ""]
            if args.y0 is None:
                y0_list = list(range(cfg.spec.n_states))
            else:
                y0_list = [int(v) for v in args.y0.split(",") if v != ""]
            return cmd_simulate(cfg, out, args.strategy, args.barriers,
                                x0_list, y0_list)
        if args.command == "sweep-det":
            if args.n_max < 0:
                raise ConfigError(["--n-max must be >= 0"])
            return cmd_sweep_det(cfg, out, args.n_max)
        if args.command == "sweep-poisson":
            if args.n_max < 1:
                raise ConfigError(["--n-max must be >= 1"])
            return cmd_sweep_poisson(cfg, out, args.n_max)
        raise ConfigError([f"unknown command {args.command!r}"])
    except ConfigError as exc:
        for msg in exc.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _replace(cfg: RunConfig, **kw) -> RunConfig:
    import dataclasses
    return dataclasses.replace(cfg, **kw)


if __name__ == "__main__":
    sys.exit(main())
