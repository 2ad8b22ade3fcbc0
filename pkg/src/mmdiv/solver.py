"""Grid-based value iteration for the periodic-dividend control problem.

The one-epoch dynamic-programming operator is evaluated on a fixed bundle of
simulated segments per initial state (common random numbers), so each sweep is
a deterministic function of the bundle and the concavity / monotone-derivative
structure survives the iteration.  A dual solver iterates the right-derivative
recursion directly and is used for cross-validation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .model import DividendClock, ModelSpec, epoch_discount_factor
from .sampling import PathBundle, default_dt, sample_epoch_bundle

__all__ = [
    "Grid",
    "ValueGrid",
    "BarrierProfile",
    "SolveResult",
    "SolverConvergenceError",
    "GridCapError",
    "make_grid",
    "default_x_max",
    "pava_nonincreasing",
    "right_derivative",
    "extract_barriers",
    "tilde_transform",
    "apply_value_operator",
    "apply_derivative_operator",
    "compute_v0",
    "value_iterate",
    "solve_derivative_fixed_point",
    "derivative_se",
    "gamma_check",
]


class SolverConvergenceError(RuntimeError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class GridCapError(RuntimeError):
    """The upper barrier ran into the top of the grid; enlarge x_max."""


@dataclass(frozen=True)
class Grid:
    x: np.ndarray  # uniform nodes 0 = x_0 < ... < x_max

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    @property
    def h(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def x_max(self) -> float:
        return float(self.x[-1])


def make_grid(x_max: float, n_nodes: int) -> Grid:
    if not x_max > 0:
        raise ValueError("x_max must be positive")
    if n_nodes < 16:
        raise ValueError("n_nodes must be at least 16")
    return Grid(np.linspace(0.0, x_max, n_nodes))


def default_x_max(spec: ModelSpec, clock: DividendClock) -> float:
    """Heuristic domain size: 4x the deterministic-drift barrier plus noise room."""
    mus = np.abs(spec.mu())
    q = spec.discount
    det_barrier = float(np.max(np.log(spec.beta) * mus / q))
    diff_scale = float(np.max(spec.sigma())) * np.sqrt(max(clock.mean(), 1.0))
    return max(4.0 * det_barrier + 5.0 * diff_scale, 1.0)


@dataclass(frozen=True)
class ValueGrid:
    grid: Grid
    values: np.ndarray                 # (n_states, n_nodes)
    derivs: Optional[np.ndarray] = None

    def with_derivs(self, beta: float) -> "ValueGrid":
        return ValueGrid(self.grid, self.values,
                         right_derivative(self.values, self.grid.h, beta))

    def extend_below(self, x: np.ndarray, s: int, beta: float) -> np.ndarray:
        """Evaluate f(x, s) including the analytic beta-slope branch below 0."""
        vals = np.interp(np.clip(x, 0.0, None), self.grid.x, self.values[s])
        return vals + beta * np.clip(x, None, 0.0)


@dataclass(frozen=True)
class BarrierProfile:
    lower: np.ndarray           # (n_states,)
    upper: np.ndarray
    at_cap: np.ndarray          # bool per state: upper not resolved below x_max

    def as_rows(self, states):
        return [(y, self.lower[i], self.upper[i], bool(self.at_cap[i]))
                for i, y in enumerate(states)]


@dataclass
class SolveResult:
    value: ValueGrid
    barriers: BarrierProfile
    v0: ValueGrid
    n_iter: int
    sup_changes: list
    contraction_estimate: float
    epoch_discounts: np.ndarray
    proj_magnitudes: list
    tol_d: float
    dual_derivs: Optional[np.ndarray] = None
    dual_barriers: Optional[BarrierProfile] = None
    gamma: Optional["GammaReport"] = None
    bundles: Optional[dict] = None


def pava_nonincreasing(d: np.ndarray) -> np.ndarray:
    """Pool-adjacent-violators projection onto nonincreasing sequences (L2)."""
    n = d.size
    level = np.empty(n)
    weight = np.empty(n)
    idx = np.empty(n, dtype=np.int64)  # block start
    top = -1
    for i in range(n):
        top += 1
        level[top] = d[i]
        weight[top] = 1.0
        idx[top] = i
        while top > 0 and level[top - 1] < level[top]:
            w = weight[top - 1] + weight[top]
            level[top - 1] = (level[top - 1] * weight[top - 1]
                              + level[top] * weight[top]) / w
            weight[top - 1] = w
            top -= 1
    out = np.empty(n)
    for b in range(top + 1):
        end = idx[b + 1] if b < top else n
        out[idx[b]:end] = level[b]
    return out


def right_derivative(values: np.ndarray, h: float, beta: float) -> np.ndarray:
    """Forward differences clamped to [0, beta]; last node copies predecessor."""
    vals = np.atleast_2d(values)
    d = np.empty_like(vals)
    d[:, :-1] = np.diff(vals, axis=1) / h
    d[:, -1] = d[:, -2]
    out = np.clip(d, 0.0, beta)
    return out if values.ndim == 2 else out[0]


def extract_barriers(d: np.ndarray, grid: Grid, tol_d: float = 1e-6) -> BarrierProfile:
    """Locate the band where the (monotone) derivative crosses 1."""
    d = np.atleast_2d(d)
    n_states = d.shape[0]
    lower = np.zeros(n_states)
    upper = np.full(n_states, grid.x_max)
    at_cap = np.zeros(n_states, dtype=bool)
    for s in range(n_states):
        above = np.nonzero(d[s] > 1.0 + tol_d)[0]
        lower[s] = grid.x[above[-1]] if above.size else 0.0
        below = np.nonzero(d[s] < 1.0 - tol_d)[0]
        if below.size:
            upper[s] = grid.x[below[0]]
        else:
            at_cap[s] = True
    return BarrierProfile(lower, upper, at_cap)


def _projected_derivative(values: np.ndarray, grid: Grid, beta: float):
    """Clamped forward differences, isotonic-projected; plus the projection
    magnitude expressed as the sup-norm change of the reconstructed values."""
    d_raw = right_derivative(values, grid.h, beta)
    d_proj = np.empty_like(d_raw)
    for s in range(d_raw.shape[0]):
        d_proj[s] = pava_nonincreasing(d_raw[s])
    drift = np.cumsum(d_raw - d_proj, axis=1) * grid.h
    proj_mag = float(np.abs(drift).max())
    return d_proj, proj_mag


def _reconstruct(values0: np.ndarray, d: np.ndarray, h: float) -> np.ndarray:
    out = np.empty_like(d)
    out[:, 0] = values0
    out[:, 1:] = values0[:, None] + np.cumsum(d[:, :-1], axis=1) * h
    return out


def tilde_transform(f: ValueGrid, barriers: BarrierProfile,
                    beta: float) -> ValueGrid:
    """Linearize f with slope 1 above the lower barrier (payout transform)."""
    x = f.grid.x
    out = f.values.copy()
    for s in range(out.shape[0]):
        b = barriers.lower[s]
        i_b = int(np.searchsorted(x, b + 1e-12)) - 1
        i_b = max(i_b, 0)
        above = x > x[i_b]
        out[s, above] = out[s, i_b] + (x[above] - x[i_b])
    return ValueGrid(f.grid, out)


def _kernel(backend):
    impl, _ = kernels.get_backend(backend)
    return impl


def _tilde_values(values: np.ndarray, grid: Grid, beta: float):
    """Concave payout-transformed surface rebuilt from the projected derivative."""
    d_proj, proj_mag = _projected_derivative(values, grid, beta)
    d_tilde = np.maximum(d_proj, 1.0)
    f_tilde = _reconstruct(values[:, 0], d_tilde, grid.h)
    return f_tilde, d_proj, proj_mag


def apply_value_operator(f: ValueGrid, bundles: dict, spec: ModelSpec,
                         backend: str = "auto") -> ValueGrid:
    """One sweep of the optimal one-epoch operator on the fixed bundles."""
    impl = _kernel(backend)
    grid = f.grid
    f_tilde, _, _ = _tilde_values(f.values, grid, spec.beta)
    slope_hi = np.ones(spec.n_states)
    out = np.empty_like(f.values)
    for s in range(spec.n_states):
        bundle = bundles[s]
        if bundle.y0 != s:
            raise ValueError(f"bundle for state {s} starts at {bundle.y0}")
        sums = impl.value_terms(bundle.offsets, bundle.rec_m, bundle.rec_disc,
                                bundle.xi_end, bundle.disc_end, bundle.y_end,
                                grid.x, f_tilde, slope_hi, spec.beta)
        out[s] = sums / bundle.n_paths
    return ValueGrid(grid, out)


def apply_derivative_operator(d: np.ndarray, bundles: dict, grid: Grid,
                              spec: ModelSpec, backend: str = "auto") -> np.ndarray:
    """One sweep of the right-derivative recursion on the fixed bundles."""
    impl = _kernel(backend)
    d2 = np.atleast_2d(d)
    d_proj = np.empty_like(d2)
    for s in range(d2.shape[0]):
        d_proj[s] = pava_nonincreasing(np.clip(d2[s], 0.0, spec.beta))
    d_tilde = np.maximum(d_proj, 1.0)
    out = np.empty_like(d2)
    for s in range(spec.n_states):
        bundle = bundles[s]
        sums = impl.deriv_terms(bundle.offsets, bundle.rec_m, bundle.rec_disc,
                                bundle.xi_end, bundle.disc_end, bundle.y_end,
                                grid.x, d_tilde, spec.beta)
        out[s] = np.clip(sums / bundle.n_paths, 0.0, spec.beta)
    return out


def _value_scale(values: np.ndarray) -> float:
    return max(1.0, float(np.abs(values).max()))


def _no_dividend_sweep(values: np.ndarray, grid: Grid, bundles: dict,
                       spec: ModelSpec, impl) -> np.ndarray:
    slope_hi = np.ascontiguousarray(right_derivative(values, grid.h, spec.beta)[:, -1])
    out = np.empty_like(values)
    for s in range(spec.n_states):
        bundle = bundles[s]
        sums = impl.value_terms(bundle.offsets, bundle.rec_m, bundle.rec_disc,
                                bundle.xi_end, bundle.disc_end, bundle.y_end,
                                grid.x, values, slope_hi, spec.beta)
        out[s] = sums / bundle.n_paths
    return out


def compute_v0(spec: ModelSpec, clock: DividendClock, bundles: dict,
               grid: Grid, eps: float = 2e-4, max_iter: int = 20000,
               backend: str = "auto") -> ValueGrid:
    """Value of the never-pay strategy: fixed point of the no-dividend sweep."""
    impl = _kernel(backend)
    r = max(epoch_discount_factor(spec, clock, y) for y in range(spec.n_states))
    values = np.zeros((spec.n_states, grid.n))
    history = []
    for _ in range(max_iter):
        new = _no_dividend_sweep(values, grid, bundles, spec, impl)
        change = float(np.abs(new - values).max())
        history.append(change)
        values = new
        if change <= eps * _value_scale(values) * (1.0 - r):
            return ValueGrid(grid, values).with_derivs(spec.beta)
    raise SolverConvergenceError(
        f"v0 iteration did not converge in {max_iter} sweeps "
        f"(last change {history[-1]:.3e})", history)


def derivative_se(d: np.ndarray, bundles: dict, grid: Grid, spec: ModelSpec,
                  n_blocks: int = 10, backend: str = "auto") -> float:
    """Monte-Carlo standard error of the derivative sweep, by path blocking."""
    impl = _kernel(backend)
    d2 = np.atleast_2d(d)
    d_tilde = np.maximum(d2, 1.0)
    worst = 0.0
    for s in range(spec.n_states):
        bundle = bundles[s]
        n = bundle.n_paths
        edges = np.linspace(0, n, n_blocks + 1).astype(np.int64)
        means = []
        for b in range(n_blocks):
            lo, hi = edges[b], edges[b + 1]
            offs = bundle.offsets[lo:hi + 1] - bundle.offsets[lo]
            sl = slice(bundle.offsets[lo], bundle.offsets[hi])
            sums = impl.deriv_terms(np.ascontiguousarray(offs),
                                    bundle.rec_m[sl], bundle.rec_disc[sl],
                                    bundle.xi_end[lo:hi], bundle.disc_end[lo:hi],
                                    bundle.y_end[lo:hi], grid.x, d_tilde,
                                    spec.beta)
            means.append(sums / (hi - lo))
        block = np.std(np.array(means), axis=0, ddof=1) / np.sqrt(n_blocks)
        worst = max(worst, float(block.max()))
    return worst


def sample_bundles(spec: ModelSpec, clock: DividendClock, n_paths: int,
                   dt: Optional[float] = None, seed: int = 0) -> dict:
    if dt is None:
        dt = default_dt(clock)
    return {s: sample_epoch_bundle(spec, clock, s, n_paths, dt=dt, seed=seed)
            for s in range(spec.n_states)}


def value_iterate(spec: ModelSpec, clock: DividendClock, grid: Grid,
                  n_paths: int = 20000, dt: Optional[float] = None,
                  seed: int = 0, eps: float = 2e-4, max_iter: int = 20000,
                  tol_d: Optional[float] = None, backend: str = "auto",
                  bundles: Optional[dict] = None, dual: bool = True,
                  error_on_cap: bool = True, keep_bundles: bool = False,
                  on_iterate=None) -> SolveResult:
    """Iterate the one-epoch operator from the never-pay value to convergence.

    Common random numbers: one bundle per initial state, reused across every
    sweep, so the whole solve is deterministic in (inputs, seed).
    """
    rep_failures = [c for c in _validate(spec).checks if not c[1]]
    if rep_failures:
        raise ValueError(f"model failed validation: {rep_failures}")
    impl = _kernel(backend)
    if bundles is None:
        bundles = sample_bundles(spec, clock, n_paths, dt=dt, seed=seed)

    r_y = np.array([epoch_discount_factor(spec, clock, s, seed=seed)
                    for s in range(spec.n_states)])
    r = float(r_y.max())

    v0 = compute_v0(spec, clock, bundles, grid, eps=eps, backend=backend)
    values = v0.values.copy()
    slope_hi = np.ones(spec.n_states)
    sup_changes = []
    proj_mags = []
    converged = False
    for _ in range(max_iter):
        f_tilde, _, proj_mag = _tilde_values(values, grid, spec.beta)
        proj_mags.append(proj_mag)
        new = np.empty_like(values)
        for s in range(spec.n_states):
            bundle = bundles[s]
            sums = impl.value_terms(bundle.offsets, bundle.rec_m,
                                    bundle.rec_disc, bundle.xi_end,
                                    bundle.disc_end, bundle.y_end,
                                    grid.x, f_tilde, slope_hi, spec.beta)
            new[s] = sums / bundle.n_paths
        change = float(np.abs(new - values).max())
        sup_changes.append(change)
        values = new
        if on_iterate is not None:
            on_iterate(len(sup_changes), ValueGrid(grid, values))
        if change <= eps * _value_scale(values) * (1.0 - r):
            converged = True
            break
    if not converged:
        raise SolverConvergenceError(
            f"value iteration did not converge in {max_iter} sweeps "
            f"(last change {sup_changes[-1]:.3e})", sup_changes)

    d_proj, final_proj = _projected_derivative(values, grid, spec.beta)
    proj_mags.append(final_proj)
    if tol_d is None:
        tol_d = max(1e-6, 2.0 * derivative_se(d_proj, bundles, grid, spec,
                                              backend=backend))
    barriers = extract_barriers(d_proj, grid, tol_d)
    if error_on_cap and barriers.at_cap.any():
        raise GridCapError(
            f"upper barrier hit the grid cap x_max={grid.x_max}; states "
            f"{np.nonzero(barriers.at_cap)[0].tolist()}")

    dual_derivs = None
    dual_barriers = None
    if dual:
        dual_derivs = solve_derivative_fixed_point(
            spec, clock, grid, bundles, r=r, backend=backend)
        dual_barriers = extract_barriers(dual_derivs, grid, tol_d)

    tail = sup_changes[len(sup_changes) // 2:]
    ratios = [b / a for a, b in zip(tail, tail[1:]) if a > 0]
    contraction = float(np.median(ratios)) if ratios else 0.0

    return SolveResult(
        value=ValueGrid(grid, values, d_proj),
        barriers=barriers,
        v0=v0,
        n_iter=len(sup_changes),
        sup_changes=sup_changes,
        contraction_estimate=contraction,
        epoch_discounts=r_y,
        proj_magnitudes=proj_mags,
        tol_d=float(tol_d),
        dual_derivs=dual_derivs,
        dual_barriers=dual_barriers,
        bundles=bundles if keep_bundles else None,
    )


def solve_derivative_fixed_point(spec: ModelSpec, clock: DividendClock,
                                 grid: Grid, bundles: dict,
                                 r: Optional[float] = None,
                                 eps: float = 1e-4, max_iter: int = 20000,
                                 backend: str = "auto") -> np.ndarray:
    """Fixed point of the right-derivative recursion (dual solver)."""
    if r is None:
        r = max(epoch_discount_factor(spec, clock, s)
                for s in range(spec.n_states))
    d = np.full((spec.n_states, grid.n), 1.0)
    history = []
    for _ in range(max_iter):
        new = apply_derivative_operator(d, bundles, grid, spec, backend=backend)
        change = float(np.abs(new - d).max())
        history.append(change)
        d = new
        if change <= eps * spec.beta * (1.0 - r):
            for s in range(d.shape[0]):
                d[s] = pava_nonincreasing(d[s])
            return d
    raise SolverConvergenceError(
        f"derivative iteration did not converge in {max_iter} sweeps "
        f"(last change {history[-1]:.3e})", history)


@dataclass
class GammaReport:
    checks: list = field(default_factory=list)

    def add(self, name, passed, detail=""):
        self.checks.append((name, bool(passed), detail))

    @property
    def ok(self):
        return all(p for _, p, _ in self.checks)


def gamma_check(f: ValueGrid, spec: ModelSpec, tol: float = 1e-6,
                envelopes: Optional[dict] = None,
                envelope_tol: float = 0.0) -> GammaReport:
    """Concavity, derivative range and (optionally) baseline envelope checks.

    `envelopes` maps state index -> (dividend_baseline_at_0, injection_baseline_at_0)
    for the reflect-at-zero strategy, both as positive NPVs.
    """
    rep = GammaReport()
    grid = f.grid
    d = right_derivative(f.values, grid.h, spec.beta + 1.0)  # unclamped top
    for s in range(f.values.shape[0]):
        jumps = np.diff(d[s, :-1])
        worst = float(jumps.max()) if jumps.size else 0.0
        rep.add(f"concavity[{s}]", worst <= tol,
                f"max forward-difference increase {worst:.3e}")
        dmin, dmax = float(d[s].min()), float(d[s].max())
        rep.add(f"derivative range[{s}]",
                dmin >= -tol and dmax <= spec.beta + tol,
                f"derivative in [{dmin:.4f}, {dmax:.4f}], beta={spec.beta}")
        if envelopes is not None:
            div0, inj0 = envelopes[s]
            upper = grid.x + div0 + envelope_tol
            over = float((f.values[s] - upper).max())
            rep.add(f"upper envelope[{s}]", over <= tol,
                    f"max excess over dividend baseline {over:.3e}")
            floor = -spec.beta * inj0 - envelope_tol
            rep.add(f"lower envelope[{s}]", f.values[s, 0] >= floor - tol,
                    f"f(0)={f.values[s, 0]:.4f} vs -beta*R0={floor:.4f}")
    return rep


def _validate(spec: ModelSpec):
    from .model import validate_model
    return validate_model(spec)
