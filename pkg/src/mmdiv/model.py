"""Model and dividend-clock definitions for the regime-switching surplus process.

The surplus is a Markov-modulated Levy process: a continuous-time Markov chain
Y on a finite state space selects, per state, a drift, a volatility and a
compound-Poisson jump part.  Dividend opportunities arrive at the renewal
epochs of an iid clock; discounting accrues at a state-dependent rate q(y) and
capital injections cost beta > 1 per unit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "JumpLaw",
    "Regime",
    "ModelSpec",
    "DividendClock",
    "ValidationReport",
    "validate_model",
    "epoch_discount_factor",
    "epoch_state_mass",
]


@dataclass(frozen=True)
class JumpLaw:
    """Finite-mean jump-size distribution.

    kind:
      "constant"  -- every jump has size `value` (signed)
      "exp_down"  -- jumps are -Exp with mean `mean` (strictly negative)
      "two_point" -- size `value` with probability `weight`, else `value2`
    """

    kind: str
    value: float = 0.0
    mean: float = 1.0
    value2: float = 0.0
    weight: float = 0.5

    def mean_size(self) -> float:
        if self.kind == "constant":
            return self.value
        if self.kind == "exp_down":
            return -self.mean
        if self.kind == "two_point":
            return self.weight * self.value + (1.0 - self.weight) * self.value2
        raise ValueError(f"unknown jump law kind {self.kind!r}")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "constant":
            return np.full(n, self.value)
        if self.kind == "exp_down":
            return -rng.exponential(self.mean, size=n)
        if self.kind == "two_point":
            u = rng.random(n)
            return np.where(u < self.weight, self.value, self.value2)
        raise ValueError(f"unknown jump law kind {self.kind!r}")


@dataclass(frozen=True)
class Regime:
    """Per-state Levy triplet (finite activity)."""

    mu: float
    sigma: float = 0.0
    jump_rate: float = 0.0
    jump_law: Optional[JumpLaw] = None


@dataclass(frozen=True)
class ModelSpec:
    states: tuple
    generator: np.ndarray          # (n, n) switching rates, rows sum to 0
    regimes: tuple                 # one Regime per state
    discount: np.ndarray           # q(y) > q_floor per state
    beta: float
    q_floor: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "regimes", tuple(self.regimes))
        gen = np.array(self.generator, dtype=float)
        gen.setflags(write=False)
        object.__setattr__(self, "generator", gen)
        q = np.array(self.discount, dtype=float)
        q.setflags(write=False)
        object.__setattr__(self, "discount", q)

    @property
    def n_states(self) -> int:
        return len(self.states)

    def state_index(self, y) -> int:
        return self.states.index(y)

    def mu(self) -> np.ndarray:
        return np.array([r.mu for r in self.regimes])

    def sigma(self) -> np.ndarray:
        return np.array([r.sigma for r in self.regimes])

    def jump_rate(self) -> np.ndarray:
        return np.array([r.jump_rate for r in self.regimes])

    def switch_rate(self) -> np.ndarray:
        return -np.diag(self.generator)

    def constant_discount(self) -> Optional[float]:
        """The common discount rate, or None if q varies with the state."""
        q = self.discount
        if np.all(q == q[0]):
            return float(q[0])
        return None


@dataclass(frozen=True)
class DividendClock:
    """Renewal distribution of dividend-opportunity interarrival times.

    kind: "deterministic" (atom at `delta`), "exponential" (`rate`), or
    "mixture" (atoms `times` with weights `weights`).
    """

    kind: str
    delta: float = 1.0
    rate: float = 1.0
    times: tuple = ()
    weights: tuple = ()

    def __post_init__(self):
        if self.kind == "deterministic":
            if not self.delta > 0:
                raise ValueError("deterministic clock needs delta > 0")
        elif self.kind == "exponential":
            if not self.rate > 0:
                raise ValueError("exponential clock needs rate > 0")
        elif self.kind == "mixture":
            t = np.array(self.times, dtype=float)
            w = np.array(self.weights, dtype=float)
            if t.size == 0 or t.size != w.size:
                raise ValueError("mixture clock needs matching times/weights")
            if np.any(t <= 0) or np.any(w < 0):
                raise ValueError("mixture atoms must be positive, weights nonnegative")
            if abs(w.sum() - 1.0) > 1e-12:
                raise ValueError("mixture weights must sum to 1")
            object.__setattr__(self, "times", tuple(t))
            object.__setattr__(self, "weights", tuple(w))
        else:
            raise ValueError(f"unknown clock kind {self.kind!r}")

    def mean(self) -> float:
        if self.kind == "deterministic":
            return self.delta
        if self.kind == "exponential":
            return 1.0 / self.rate
        return float(np.dot(self.times, self.weights))

    def laplace(self, q: float) -> float:
        """E[exp(-q T)] in closed form."""
        if self.kind == "deterministic":
            return float(np.exp(-q * self.delta))
        if self.kind == "exponential":
            return self.rate / (self.rate + q)
        return float(np.dot(self.weights, np.exp(-q * np.array(self.times))))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "deterministic":
            return np.full(n, self.delta)
        if self.kind == "exponential":
            return rng.exponential(1.0 / self.rate, size=n)
        idx = rng.choice(len(self.times), size=n, p=np.array(self.weights))
        return np.array(self.times)[idx]


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)  # (name, passed, detail)

    def add(self, name: str, passed: bool, detail: str = "") -> None:
        self.checks.append((name, bool(passed), detail))

    @property
    def ok(self) -> bool:
        return all(passed for _, passed, _ in self.checks)

    def failures(self) -> list:
        return [c for c in self.checks if not c[1]]


def validate_model(spec: ModelSpec) -> ValidationReport:
    """Check the structural assumptions the downstream machinery relies on."""
    rep = ValidationReport()
    gen = spec.generator
    n = spec.n_states

    square = gen.shape == (n, n)
    rep.add("generator shape", square, f"expected ({n}, {n}), got {gen.shape}")
    if square:
        rowsum = np.abs(gen.sum(axis=1)).max()
        rep.add("generator row sum", rowsum <= 1e-12,
                f"max |row sum| = {rowsum:.3e}")
        off = gen - np.diag(np.diag(gen))
        rep.add("generator off-diagonals", np.all(off >= 0),
                "off-diagonal switching rates must be nonnegative")

    rep.add("distinct states", len(set(spec.states)) == n,
            "state identifiers must be unique")
    rep.add("regime count", len(spec.regimes) == n,
            f"expected {n} regimes, got {len(spec.regimes)}")
    rep.add("discount count", spec.discount.size == n,
            f"expected {n} discount rates, got {spec.discount.size}")

    rep.add("q floor", spec.q_floor > 0 and np.all(spec.discount >= spec.q_floor),
            f"min q = {spec.discount.min():.3g}, floor = {spec.q_floor:.3g}")
    rep.add("beta must exceed 1", spec.beta > 1.0, f"beta = {spec.beta}")

    for y, r in zip(spec.states, spec.regimes):
        ok = r.sigma >= 0
        rep.add(f"volatility[{y}]", ok, "sigma must be >= 0")
        ok = r.jump_rate >= 0
        rep.add(f"jump rate[{y}]", ok, "jump intensity must be >= 0")
        if r.jump_rate > 0:
            if r.jump_law is None:
                rep.add(f"jump law[{y}]", False, "jump rate > 0 without a jump law")
            else:
                try:
                    m = r.jump_law.mean_size()
                    rep.add(f"jump law[{y}]", np.isfinite(m),
                            f"mean jump size = {m:.3g}")
                except ValueError as exc:
                    rep.add(f"jump law[{y}]", False, str(exc))
    return rep


def _modulator_epoch_samples(spec: ModelSpec, clock: DividendClock, y: int,
                             n_paths: int, rng: np.random.Generator):
    """Simulate the modulator alone over one clock draw per path.

    Returns (exp(-frq(T)) array, terminal state array).  Holding times are
    exact exponentials; the surplus component is not needed here.
    """
    T = clock.sample(rng, n_paths)
    t = np.zeros(n_paths)
    qacc = np.zeros(n_paths)
    state = np.full(n_paths, y, dtype=np.int64)
    rates = spec.switch_rate()
    q = spec.discount
    gen = spec.generator
    n = spec.n_states
    active = rates[state] > 0
    # frozen paths accrue their whole discount in one go
    qacc[~active] = q[y] * T[~active]
    while np.any(active):
        idx = np.nonzero(active)[0]
        r = rates[state[idx]]
        hold = rng.exponential(1.0, size=idx.size) / r
        dtau = np.minimum(hold, T[idx] - t[idx])
        qacc[idx] += q[state[idx]] * dtau
        done = hold >= T[idx] - t[idx]
        t[idx] += hold
        active[idx[done]] = False
        move = idx[~done]
        if move.size:
            # embedded-chain transition probabilities
            u = rng.random(move.size)
            for k, p_idx in enumerate(move):
                s = state[p_idx]
                probs = gen[s].copy()
                probs[s] = 0.0
                probs = probs / probs.sum()
                state[p_idx] = np.searchsorted(np.cumsum(probs), u[k], side="right")
            frozen = rates[state[move]] <= 0
            if np.any(frozen):
                fr = move[frozen]
                qacc[fr] += q[state[fr]] * (T[fr] - t[fr])
                active[fr] = False
    return np.exp(-qacc), state


def epoch_discount_factor(spec: ModelSpec, clock: DividendClock, y,
                          n_paths: int = 20000, seed: int = 0,
                          with_se: bool = False):
    """r(y) = E[exp(-frq(T))], the one-epoch contraction ratio.

    Closed form when the discount rate is state-independent, Monte Carlo over
    the modulator otherwise.
    """
    q0 = spec.constant_discount()
    if q0 is not None:
        val = clock.laplace(q0)
        return (val, 0.0) if with_se else val
    yi = spec.state_index(y) if y in spec.states else int(y)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xD15C, yi)))
    disc, _ = _modulator_epoch_samples(spec, clock, yi, n_paths, rng)
    val = float(disc.mean())
    se = float(disc.std(ddof=1) / np.sqrt(n_paths))
    return (val, se) if with_se else val


def epoch_state_mass(spec: ModelSpec, clock: DividendClock, y,
                     n_paths: int, seed: int = 0) -> np.ndarray:
    """Estimate m_y: the law of the modulator state at the first epoch."""
    if n_paths <= 0:
        raise ValueError("n_paths must be positive")
    yi = spec.state_index(y) if y in spec.states else int(y)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x3A55, yi)))
    _, y_end = _modulator_epoch_samples(spec, clock, yi, n_paths, rng)
    counts = np.bincount(y_end, minlength=spec.n_states)
    return counts / counts.sum()
