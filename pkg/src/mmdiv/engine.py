"""Vectorized long-horizon simulation of the controlled surplus process.

All paths advance on a shared global time grid; every random draw is made for
every path at every step so that two runs with the same seed stay coupled
sample-by-sample even when their controls differ.  Epoch times come from a
separate stream (the payout schedule is independent of the surplus), which
keeps the schedule identical across coupled runs as well.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .model import DividendClock, ModelSpec, epoch_discount_factor

__all__ = [
    "EngineResult",
    "RawStopResult",
    "default_horizon",
    "run_controlled",
    "run_first_passage",
    "run_randomized_stop",
]

_EPOCH_SLACK = 1e-9


@dataclass
class EngineResult:
    div_npv: np.ndarray          # discounted dividends per path
    inj_npv: np.ndarray          # discounted injections per path (no beta)
    n_epochs: int
    x_final: np.ndarray
    y_final: np.ndarray
    cum_div: Optional[np.ndarray] = None   # (horizon, n_paths) undiscounted
    cum_inj: Optional[np.ndarray] = None

    def npv(self, beta: float) -> np.ndarray:
        return self.div_npv - beta * self.inj_npv


@dataclass
class RawStopResult:
    contributions: np.ndarray
    truncated: np.ndarray        # paths still running at the horizon
    n_epochs_used: np.ndarray

    @property
    def truncated_share(self) -> float:
        return float(self.truncated.mean())


def default_horizon(spec: ModelSpec, clock: DividendClock,
                    tail: float = 1e-4) -> int:
    """Smallest epoch count whose residual discount factor is below `tail`."""
    r = max(epoch_discount_factor(spec, clock, s)
            for s in range(spec.n_states))
    r = min(r, 1.0 - 1e-12)
    return max(int(np.ceil(np.log(tail) / np.log(r))), 1)


class _Stepper:
    """Shared per-step dynamics: increments, jumps, discount, state switches."""

    def __init__(self, spec: ModelSpec, dt: float, n_paths: int, seed: int):
        self.spec = spec
        self.dt = dt
        self.sqdt = np.sqrt(dt)
        self.n = n_paths
        self.mu = spec.mu()
        self.sigma = spec.sigma()
        self.q = spec.discount
        self.lam = spec.jump_rate()
        self.p_jump = -np.expm1(-self.lam * dt)
        rates = spec.switch_rate()
        self.p_switch = -np.expm1(-rates * dt)
        Q = spec.generator
        self.cum_target = np.zeros((spec.n_states, spec.n_states))
        for s in range(spec.n_states):
            probs = Q[s].copy()
            probs[s] = 0.0
            tot = probs.sum()
            self.cum_target[s] = (np.cumsum(probs / tot) if tot > 0
                                  else np.ones(spec.n_states))
        self.rng = np.random.default_rng(np.random.SeedSequence((seed, 1)))

    def advance(self, X: np.ndarray, Y: np.ndarray, qacc: np.ndarray,
                active: np.ndarray):
        """One dt step; draws for all paths, updates only active ones."""
        rng, n = self.rng, self.n
        z = rng.standard_normal(n)
        u_jump = rng.random(n)
        u_switch = rng.random(n)
        dX = self.mu[Y] * self.dt + self.sigma[Y] * self.sqdt * z
        jmask = u_jump < self.p_jump[Y]
        if jmask.any():
            for s in range(self.spec.n_states):
                idx = np.nonzero(jmask & (Y == s))[0]
                if idx.size:
                    dX[idx] += self.spec.regimes[s].jump_law.sample(rng, idx.size)
        np.add(X, dX, out=X, where=active)
        np.add(qacc, self.q[Y] * self.dt, out=qacc, where=active)
        smask = u_switch < self.p_switch[Y]
        if smask.any():
            u_t = rng.random(n)
            move = smask & active
            y_prev = Y.copy()
            for s in range(self.spec.n_states):
                idx = np.nonzero(move & (y_prev == s))[0]
                if idx.size:
                    Y[idx] = np.searchsorted(self.cum_target[s], u_t[idx],
                                             side="right")


def _clock_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, 2)))


def run_controlled(spec: ModelSpec, clock: DividendClock,
                   payout: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray],
                   x0: float, y0: int, n_paths: int, dt: float,
                   horizon_epochs: int, seed: int = 0,
                   collect_series: bool = False) -> EngineResult:
    """Simulate the injected surplus under a per-epoch payout rule.

    `payout(x, y, k)` receives the post-injection surplus at an epoch, the
    current state indices and the per-path epoch counters, and must return
    amounts in [0, x] (checked; violations raise with the epoch index).
    A negative x0 is covered by an immediate injection at time zero.
    """
    stepper = _Stepper(spec, dt, n_paths, seed)
    clock_rng = _clock_rng(seed)

    X = np.full(n_paths, float(x0))
    Y = np.full(n_paths, y0, dtype=np.int64)
    qacc = np.zeros(n_paths)
    div = np.zeros(n_paths)
    inj = np.zeros(n_paths)
    if x0 < 0:
        inj += -x0
        X[:] = 0.0
    k_ep = np.zeros(n_paths, dtype=np.int64)
    next_T = clock.sample(clock_rng, n_paths)
    active = np.ones(n_paths, dtype=bool)
    cum_div = np.zeros((horizon_epochs, n_paths)) if collect_series else None
    cum_inj = np.zeros((horizon_epochs, n_paths)) if collect_series else None
    raw_div = np.zeros(n_paths)
    raw_inj = np.zeros(n_paths) + (max(-x0, 0.0))

    t = 0.0
    while active.any():
        t += dt
        stepper.advance(X, Y, qacc, active)
        neg = (X < 0) & active
        if neg.any():
            amt = -X[neg]
            inj[neg] += np.exp(-qacc[neg]) * amt
            raw_inj[neg] += amt
            X[neg] = 0.0
        at_epoch = (t >= next_T - _EPOCH_SLACK) & active
        if at_epoch.any():
            idx = np.nonzero(at_epoch)[0]
            pay = np.asarray(payout(X[idx], Y[idx], k_ep[idx]), dtype=float)
            bad = (pay < -1e-12) | (pay > X[idx] + 1e-9)
            if bad.any():
                j = idx[np.nonzero(bad)[0][0]]
                raise ValueError(
                    f"payout rule violated admissibility at epoch "
                    f"{int(k_ep[j])} (path {int(j)}): pay outside [0, surplus]")
            pay = np.clip(pay, 0.0, X[idx])
            div[idx] += np.exp(-qacc[idx]) * pay
            raw_div[idx] += pay
            X[idx] -= pay
            if collect_series:
                cum_div[k_ep[idx], idx] = raw_div[idx]
                cum_inj[k_ep[idx], idx] = raw_inj[idx]
            k_ep[idx] += 1
            next_T[idx] += clock.sample(clock_rng, idx.size)
            active[idx] = k_ep[idx] < horizon_epochs

    return EngineResult(div, inj, horizon_epochs, X, Y, cum_div, cum_inj)


def run_first_passage(spec: ModelSpec, clock: DividendClock,
                      barrier: np.ndarray, y0: int, variant: int,
                      n_paths: int, dt: float, seed: int = 0,
                      max_epochs: Optional[int] = None) -> RawStopResult:
    """Race between reaching the barrier at an epoch and passing below zero.

    The uncontrolled surplus starts at barrier[y0].  Variant 1 stops at the
    first epoch with X >= barrier(Y) (weak) or the first strict passage X < 0,
    epoch winning ties; it contributes the discount at the stop, or beta times
    it on ruin.  Variant 2 uses a strict epoch condition X > barrier(Y) and a
    weak passage X <= 0 (including time zero when the start level is zero),
    ruin winning ties.
    """
    if variant not in (1, 2):
        raise ValueError("variant must be 1 or 2")
    barrier = np.asarray(barrier, dtype=float)
    if max_epochs is None:
        max_epochs = default_horizon(spec, clock)
    stepper = _Stepper(spec, dt, n_paths, seed)
    clock_rng = _clock_rng(seed)

    X = np.full(n_paths, float(barrier[y0]))
    Y = np.full(n_paths, y0, dtype=np.int64)
    qacc = np.zeros(n_paths)
    out = np.zeros(n_paths)
    n_used = np.zeros(n_paths, dtype=np.int64)
    active = np.ones(n_paths, dtype=bool)
    next_T = clock.sample(clock_rng, n_paths)

    if variant == 2 and barrier[y0] <= 0.0:
        out[:] = spec.beta           # weak passage at time zero
        active[:] = False
        return RawStopResult(out, np.zeros(n_paths, dtype=bool), n_used)

    def stop(mask, value):
        out[mask] = value[mask] if isinstance(value, np.ndarray) else value
        active[mask] = False

    t = 0.0
    while active.any():
        t += dt
        stepper.advance(X, Y, qacc, active)
        disc = None
        if variant == 2:
            ruin = (X <= 0.0) & active
            if ruin.any():
                stop(ruin, spec.beta * np.exp(-qacc))
        at_epoch = (t >= next_T - _EPOCH_SLACK) & active
        if at_epoch.any():
            if variant == 1:
                hit = at_epoch & (X >= barrier[Y])
            else:
                hit = at_epoch & (X > barrier[Y])
            if hit.any():
                stop(hit, np.exp(-qacc))
            idx = np.nonzero(at_epoch & active)[0]
            n_used[idx] += 1
            next_T[idx] += clock.sample(clock_rng, idx.size)
            reached = at_epoch & active & (n_used >= max_epochs)
            active &= ~reached
        if variant == 1:
            ruin = (X < 0.0) & active
            if ruin.any():
                stop(ruin, spec.beta * np.exp(-qacc))

    truncated = (out == 0.0) & (n_used >= max_epochs)
    return RawStopResult(out, truncated, n_used)


def run_randomized_stop(spec: ModelSpec, clock: DividendClock,
                        barrier: np.ndarray, p: np.ndarray,
                        x0: float, y0: int, n_paths: int, dt: float,
                        seed: int = 0, start_in_regime: bool = False,
                        max_epochs: Optional[int] = None) -> RawStopResult:
    """Discount at the coin-flip stopping time of the barrier strategy.

    The surplus follows the fixed-barrier periodic strategy (pay down to
    barrier(Y) at each epoch, inject at zero).  Each qualifying epoch -- the
    post-payout surplus sits exactly on the barrier and either a strictly
    positive amount was just paid or the previous flag was rejecting -- draws
    a fresh flag, accepting with probability p(Y).  The path stops at the
    first zero-touch with an accepting flag, or at the first injection onset,
    whichever comes first; the contribution is beta times the discount there.

    With `start_in_regime` the path starts on the barrier with a flag drawn
    immediately; otherwise it starts at x0 and flags only begin once an epoch
    first finds the surplus at or above the barrier.
    """
    barrier = np.asarray(barrier, dtype=float)
    p = np.asarray(p, dtype=float)
    if max_epochs is None:
        max_epochs = default_horizon(spec, clock)
    stepper = _Stepper(spec, dt, n_paths, seed)
    clock_rng = _clock_rng(seed)
    flag_rng = np.random.default_rng(np.random.SeedSequence((seed, 3)))

    if start_in_regime:
        x_start = float(barrier[y0])
    else:
        x_start = float(x0)
    X = np.full(n_paths, x_start)
    Y = np.full(n_paths, y0, dtype=np.int64)
    qacc = np.zeros(n_paths)
    out = np.zeros(n_paths)
    stopped = np.zeros(n_paths, dtype=bool)
    started = np.full(n_paths, bool(start_in_regime))
    accept = np.zeros(n_paths, dtype=bool)   # current flag accepts zero-touch
    n_used = np.zeros(n_paths, dtype=np.int64)
    next_T = clock.sample(clock_rng, n_paths)
    active = np.ones(n_paths, dtype=bool)

    if start_in_regime:
        accept[:] = flag_rng.random(n_paths) <= p[y0]
        if barrier[y0] == 0.0:
            hit = accept.copy()
            out[hit] = spec.beta
            stopped[hit] = True
            active[hit] = False
    elif x_start < 0.0:
        out[:] = spec.beta           # immediate injection at time zero
        return RawStopResult(out, np.zeros(n_paths, dtype=bool), n_used)

    t = 0.0
    while active.any():
        t += dt
        stepper.advance(X, Y, qacc, active)
        neg = (X < 0.0) & active
        if neg.any():
            out[neg] = spec.beta * np.exp(-qacc[neg])
            stopped[neg] = True
            active[neg] = False
            X[neg] = 0.0
        at_epoch = (t >= next_T - _EPOCH_SLACK) & active
        if at_epoch.any():
            idx = np.nonzero(at_epoch)[0]
            b_here = barrier[Y[idx]]
            if not start_in_regime:
                entering = ~started[idx] & (X[idx] >= b_here)
                started[idx] |= entering
            eligible = started[idx]
            pay = np.where(eligible, np.clip(X[idx] - b_here, 0.0, None), 0.0)
            # A qualifying epoch: on the barrier after payout, and either a
            # strictly positive payout or a previously rejecting flag.  The
            # epoch that first finds the surplus at the barrier qualifies
            # unconditionally.
            qualifying = eligible & (
                (pay > 0.0) | ((X[idx] == b_here) & ~accept[idx]))
            if not start_in_regime:
                qualifying |= entering
            X[idx] -= pay
            X[idx[pay > 0.0]] = b_here[pay > 0.0]
            qi = idx[qualifying]
            if qi.size:
                accept[qi] = flag_rng.random(qi.size) <= p[Y[qi]]
            touch = idx[(X[idx] == 0.0) & accept[idx] & started[idx]]
            if touch.size:
                out[touch] = spec.beta * np.exp(-qacc[touch])
                stopped[touch] = True
                active[touch] = False
            live = at_epoch & active
            n_used[live] += 1
            next_T[at_epoch] += clock.sample(clock_rng, int(at_epoch.sum()))
            reached = live & (n_used >= max_epochs)
            active &= ~reached

    truncated = ~stopped
    return RawStopResult(out, truncated, n_used)
