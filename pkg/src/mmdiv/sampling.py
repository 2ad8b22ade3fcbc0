"""Path simulation between dividend epochs and per-path compression.

A segment is one inter-epoch stretch of the uncontrolled pair (X, Y) started
from X_0 = 0.  Modulator holding times and compound-Poisson jump times are
drawn exactly; drift and diffusion advance on Euler sub-steps of size <= dt
between events.  Each segment is compressed into the running-minimum record
sequence, which is all the solver needs to evaluate injection and passage
functionals for every starting capital at once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import DividendClock, ModelSpec

__all__ = [
    "SegmentPath",
    "PathBundle",
    "sample_segment",
    "sample_epoch_bundle",
    "evaluate_injection_functional",
    "first_passage_scan",
    "default_dt",
]


def default_dt(clock: DividendClock) -> float:
    return min(clock.mean(), 1.0) / 200.0


@dataclass(frozen=True)
class SegmentPath:
    """One simulated inter-epoch segment of (X, Y), compressed.

    xi is the additive increment X_t - X_0 on the time grid; qint is the
    accumulated discount integral frq(t); the record arrays trace the strictly
    decreasing running minimum of xi (the first record is the anchor (0, 0)).
    """

    t_end: float
    switch_times: np.ndarray
    switch_states: np.ndarray
    t: np.ndarray
    xi: np.ndarray
    qint: np.ndarray
    rec_t: np.ndarray
    rec_m: np.ndarray
    rec_qint: np.ndarray
    y_end: int

    @property
    def rec_disc(self) -> np.ndarray:
        return np.exp(-self.rec_qint)

    @property
    def xi_end(self) -> float:
        return float(self.xi[-1])

    @property
    def disc_end(self) -> float:
        return float(np.exp(-self.qint[-1]))


def _switch_plan(spec: ModelSpec, y0: int, t_end: float, rng: np.random.Generator):
    """Exact holding times of the modulator up to t_end.

    Returns (interval start times, interval states); interval k spans
    [times[k], times[k+1]) with times[-1] == t_end implied.
    """
    rates = spec.switch_rate()
    gen = spec.generator
    times = [0.0]
    states = [y0]
    t = 0.0
    y = y0
    while True:
        r = rates[y]
        if r <= 0:
            break
        t = t + rng.exponential(1.0 / r)
        if t >= t_end:
            break
        probs = gen[y].copy()
        probs[y] = 0.0
        probs = probs / probs.sum()
        y = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
        times.append(t)
        states.append(y)
    return np.array(times), np.array(states, dtype=np.int64)


def sample_segment(spec: ModelSpec, y0, t_end: float, dt: float,
                   rng: np.random.Generator) -> SegmentPath:
    """Simulate one segment of (X, Y) over [0, t_end] from X_0 = 0."""
    if dt <= 0 or t_end <= 0:
        raise ValueError("dt and t_end must be positive")
    yi = spec.state_index(y0) if y0 in spec.states else int(y0)

    sw_t, sw_y = _switch_plan(spec, yi, t_end, rng)
    mus = spec.mu()
    sigmas = spec.sigma()
    lams = spec.jump_rate()
    qs = spec.discount

    # event plan per holding interval: exact jump times, then Euler sub-steps
    times = [np.array([0.0])]
    incr = [np.array([0.0])]
    qincr = [np.array([0.0])]
    n_iv = sw_t.size
    for k in range(n_iv):
        a = sw_t[k]
        b = sw_t[k + 1] if k + 1 < n_iv else t_end
        y = sw_y[k]
        lam = lams[y]
        if lam > 0:
            n_j = rng.poisson(lam * (b - a))
            jt = np.sort(rng.random(n_j)) * (b - a) + a if n_j else np.empty(0)
            jsz = spec.regimes[y].jump_law.sample(rng, n_j) if n_j else np.empty(0)
        else:
            jt = np.empty(0)
            jsz = np.empty(0)
        # sub-grid: each inter-jump gap split into <= dt Euler steps
        knots = np.concatenate(([a], jt, [b]))
        for g in range(knots.size - 1):
            lo, hi = knots[g], knots[g + 1]
            gap = hi - lo
            seg_t = np.empty(0)
            seg_dx = np.empty(0)
            seg_dq = np.empty(0)
            if gap > 0:
                n_steps = max(1, int(np.ceil(gap / dt - 1e-12)))
                h = gap / n_steps
                z = rng.standard_normal(n_steps)
                seg_t = lo + h * np.arange(1, n_steps + 1)
                seg_t[-1] = hi
                seg_dx = mus[y] * h + sigmas[y] * np.sqrt(h) * z
                seg_dq = np.full(n_steps, qs[y] * h)
            if g < knots.size - 2:
                # jump applied at its exact time as a zero-duration increment
                seg_t = np.append(seg_t, hi)
                seg_dx = np.append(seg_dx, jsz[g])
                seg_dq = np.append(seg_dq, 0.0)
            times.append(seg_t)
            incr.append(seg_dx)
            qincr.append(seg_dq)

    t = np.concatenate(times)
    xi = np.cumsum(np.concatenate(incr))
    qint = np.cumsum(np.concatenate(qincr))

    # running-minimum records: strictly decreasing minima, one per time point
    runmin = np.minimum.accumulate(xi)
    is_rec = np.empty(t.size, dtype=bool)
    is_rec[0] = True
    is_rec[1:] = runmin[1:] < runmin[:-1]
    # zero-duration jump points share a time with the previous grid point;
    # keep only the last record at any given time
    rec_idx = np.nonzero(is_rec)[0]
    rec_t = t[rec_idx]
    keep = np.empty(rec_idx.size, dtype=bool)
    keep[-1] = True
    keep[:-1] = rec_t[1:] > rec_t[:-1]
    rec_idx = rec_idx[keep]

    return SegmentPath(
        t_end=float(t_end),
        switch_times=sw_t,
        switch_states=sw_y,
        t=t,
        xi=xi,
        qint=qint,
        rec_t=t[rec_idx],
        rec_m=runmin[rec_idx],
        rec_qint=qint[rec_idx],
        y_end=int(sw_y[-1]),
    )


@dataclass(frozen=True)
class PathBundle:
    """Common-random-number cache of one-epoch segments from a fixed state.

    Record arrays are flattened across paths with `offsets` delimiting each
    path (anchor record included).  Full SegmentPath objects are retained only
    when requested; the flattened form is what the solver kernels consume.
    """

    y0: int
    n_paths: int
    seed: int
    dt: float
    clock_draws: np.ndarray
    offsets: np.ndarray      # (n_paths + 1,) int64 into the record arrays
    rec_m: np.ndarray        # decreasing minima per path, anchor 0 first
    rec_disc: np.ndarray     # exp(-frq) at each record time
    xi_end: np.ndarray       # (n_paths,) terminal increment
    disc_end: np.ndarray     # (n_paths,) exp(-frq(T))
    y_end: np.ndarray        # (n_paths,) int64 terminal state
    segments: Optional[tuple] = None


def _path_rng(seed: int, y0: int, k: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, y0, k)))


def sample_epoch_bundle(spec: ModelSpec, clock: DividendClock, y0,
                        n_paths: int, dt: Optional[float] = None,
                        seed: int = 0, keep_paths: bool = False) -> PathBundle:
    """Draw n_paths independent (T, segment) pairs from state y0.

    Each path index owns a derived RNG stream, so the bundle is bit-identical
    for a fixed (spec, clock, y0, n_paths, dt, seed) regardless of evaluation
    order.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    yi = spec.state_index(y0) if y0 in spec.states else int(y0)
    if dt is None:
        dt = default_dt(clock)

    draws = np.empty(n_paths)
    offsets = np.empty(n_paths + 1, dtype=np.int64)
    offsets[0] = 0
    rec_m_parts = []
    rec_disc_parts = []
    xi_end = np.empty(n_paths)
    disc_end = np.empty(n_paths)
    y_end = np.empty(n_paths, dtype=np.int64)
    segs = [] if keep_paths else None

    for k in range(n_paths):
        rng = _path_rng(seed, yi, k)
        T = float(clock.sample(rng, 1)[0])
        seg = sample_segment(spec, yi, T, dt, rng)
        draws[k] = T
        rec_m_parts.append(seg.rec_m)
        rec_disc_parts.append(seg.rec_disc)
        offsets[k + 1] = offsets[k] + seg.rec_m.size
        xi_end[k] = seg.xi_end
        disc_end[k] = seg.disc_end
        y_end[k] = seg.y_end
        if keep_paths:
            segs.append(seg)

    return PathBundle(
        y0=yi,
        n_paths=n_paths,
        seed=seed,
        dt=float(dt),
        clock_draws=draws,
        offsets=offsets,
        rec_m=np.concatenate(rec_m_parts),
        rec_disc=np.concatenate(rec_disc_parts),
        xi_end=xi_end,
        disc_end=disc_end,
        y_end=y_end,
        segments=tuple(segs) if keep_paths else None,
    )


def evaluate_injection_functional(segment: SegmentPath, x: float):
    """Discounted Skorokhod injection and reflected endpoint for start x >= 0.

    Returns (discounted_injection, reflected_endpoint, terminal_discount).
    The injection is the integral of exp(-frq(t)) against the increments of
    (-(x + xi)_min) v 0, accumulated at the record times.
    """
    if x < 0:
        raise ValueError("x must be >= 0")
    m = segment.rec_m
    disc = segment.rec_disc
    inj = 0.0
    prev_excess = 0.0
    for j in range(1, m.size):
        excess = max(-x - m[j], 0.0)
        if excess > prev_excess:
            inj += disc[j] * (excess - prev_excess)
        prev_excess = max(prev_excess, excess)
    m_min = m[-1]
    endpoint = x + segment.xi_end + max(-x - m_min, 0.0)
    return inj, endpoint, segment.disc_end


def first_passage_scan(segment: SegmentPath, x: float, level: float,
                       mode: str = "below-strict"):
    """First time x + xi drops below `level` (strict) or to it (weak).

    Returns (time, exp(-frq(time))) or None if no crossing in the segment.
    """
    if mode not in ("below-strict", "below-weak"):
        raise ValueError(f"unknown mode {mode!r}")
    thr = level - x
    m = segment.rec_m
    if mode == "below-strict":
        hits = np.nonzero(m < thr)[0]
    else:
        hits = np.nonzero(m <= thr)[0]
    if hits.size == 0:
        return None
    j = hits[0]
    return float(segment.rec_t[j]), float(np.exp(-segment.rec_qint[j]))
