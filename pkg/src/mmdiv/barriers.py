"""Monte-Carlo verification of candidate barrier profiles.

Two first-passage functionals bracket the fixed-point condition that
characterizes admissible barrier profiles; their mixture pins down a per-state
probability whose randomized stopping time recovers the unit-cost identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .engine import (default_horizon, run_first_passage, run_randomized_stop)
from .model import DividendClock, ModelSpec, epoch_state_mass

__all__ = [
    "RhoEstimate",
    "XiVerdict",
    "XiStateVerdict",
    "estimate_rho",
    "check_xi_membership",
    "mixing_probability",
    "estimate_varrho_p",
    "density_crosscheck",
]


@dataclass(frozen=True)
class RhoEstimate:
    value: float
    se: float
    n_paths: int
    horizon_epochs: int
    truncated_share: float

    @property
    def warn(self) -> bool:
        return self.truncated_share > 1e-3

    def __str__(self):
        flag = " [truncation warning]" if self.warn else ""
        return f"{self.value:.6f} +- {self.se:.6f}{flag}"


def _summ(contrib: np.ndarray, truncated: np.ndarray,
          horizon: int) -> RhoEstimate:
    n = contrib.size
    se = float(np.std(contrib, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return RhoEstimate(float(contrib.mean()), se, n, horizon,
                       float(truncated.mean()))


def estimate_rho(spec: ModelSpec, clock: DividendClock, barrier: np.ndarray,
                 y0: int, variant: int, n_paths: int = 20000,
                 dt: float = 0.005, seed: int = 0,
                 max_epochs: Optional[int] = None) -> RhoEstimate:
    """First-passage functional of the uncontrolled surplus started on the
    barrier: the discount at the first qualifying epoch, or beta times the
    discount at ruin, whichever comes first (see run_first_passage for the
    variant semantics)."""
    if max_epochs is None:
        max_epochs = default_horizon(spec, clock)
    res = run_first_passage(spec, clock, barrier, y0, variant, n_paths, dt,
                            seed=seed, max_epochs=max_epochs)
    return _summ(res.contributions, res.truncated, max_epochs)


@dataclass(frozen=True)
class XiStateVerdict:
    state: int
    rho1: RhoEstimate
    rho2: RhoEstimate
    verdict: str          # "yes" / "no" / "inconclusive"
    reachable: bool       # state carries epoch mass from some start
    detail: str = ""


@dataclass(frozen=True)
class XiVerdict:
    entries: tuple                # one XiStateVerdict per state
    xi_member: str                # all states: "yes"/"no"/"inconclusive"
    hat_xi_member: str            # mass-positive states only

    def __iter__(self):
        return iter(self.entries)


def _aggregate(verdicts):
    if any(v == "no" for v in verdicts):
        return "no"
    if any(v == "inconclusive" for v in verdicts):
        return "inconclusive"
    return "yes"


def check_xi_membership(spec: ModelSpec, clock: DividendClock,
                        barrier: np.ndarray, n_paths: int = 20000,
                        dt: float = 0.005, seed: int = 0,
                        z: float = 3.0,
                        mass_paths: int = 20000,
                        atol: float = 0.0) -> XiVerdict:
    """Admissibility verdicts for a barrier profile.

    A state passes when rho_1 <= 1 and rho_2 >= 1 hold simultaneously within
    z standard errors plus an absolute slack atol (for deterministic
    instances whose only error is time discretization, where every SE is
    exactly zero); it fails when either inequality is violated beyond
    z*SE + atol; an estimate dominated by horizon truncation is
    inconclusive.  The
    full-profile verdict requires every state to pass; the relaxed verdict
    ignores states carrying no epoch mass from any start (their level is
    unconstrained, though they are still reported).
    """
    mass = np.zeros(spec.n_states)
    for y0 in range(spec.n_states):
        mass += epoch_state_mass(spec, clock, y0, n_paths=mass_paths,
                                 seed=seed)
    entries = []
    for y in range(spec.n_states):
        r1 = estimate_rho(spec, clock, barrier, y, 1, n_paths, dt,
                          seed=seed + 17 * y)
        r2 = estimate_rho(spec, clock, barrier, y, 2, n_paths, dt,
                          seed=seed + 17 * y + 1)
        fail1 = r1.value > 1.0 + z * r1.se + atol
        fail2 = r2.value < 1.0 - z * r2.se - atol
        if fail1 or fail2:
            verdict = "no"
            detail = ("rho_1 above 1 beyond noise" if fail1
                      else "rho_2 below 1 beyond noise")
        elif r1.warn or r2.warn:
            verdict = "inconclusive"
            detail = "horizon truncation share above ceiling"
        else:
            verdict = "yes"
            detail = ""
        entries.append(XiStateVerdict(y, r1, r2, verdict,
                                      reachable=bool(mass[y] > 0),
                                      detail=detail))
    return XiVerdict(
        tuple(entries),
        xi_member=_aggregate([e.verdict for e in entries]),
        hat_xi_member=_aggregate([e.verdict for e in entries if e.reachable]),
    )


class BarrierNotAdmissibleError(ValueError):
    pass


class MixingIndeterminateError(ValueError):
    pass


def mixing_probability(rho1: RhoEstimate, rho2: RhoEstimate,
                       z: float = 3.0, atol: float = 0.0) -> float:
    """Smallest mixture weight a with (1-a) rho_1 + a rho_2 = 1, in [0, 1].

    Requires rho_1 <= 1 <= rho_2 (within z standard errors plus an absolute
    slack atol, for deterministic instances where every SE is exactly zero
    and the only error is time discretization).  When the two functionals
    coincide the equation only has solutions if both equal 1, in which case
    the infimum convention gives 0.
    """
    if (rho1.value > 1.0 + z * rho1.se + atol
            or rho2.value < 1.0 - z * rho2.se - atol):
        raise BarrierNotAdmissibleError(
            f"barrier level fails the bracketing condition: "
            f"rho_1={rho1.value:.4f}, rho_2={rho2.value:.4f}")
    gap = rho2.value - rho1.value
    combined = rho1.se + rho2.se
    if gap <= max(z * combined, atol, 1e-12):
        if abs(rho1.value - 1.0) <= z * combined + atol + 1e-12:
            return 0.0
        raise MixingIndeterminateError(
            "degenerate mixture: rho_1 ~= rho_2 away from 1 has no solution")
    a = (1.0 - rho1.value) / gap
    return float(np.clip(a, 0.0, 1.0))


def estimate_varrho_p(spec: ModelSpec, clock: DividendClock,
                      barrier: np.ndarray, p: np.ndarray, y0: int,
                      x0: Optional[float] = None, n_paths: int = 20000,
                      dt: float = 0.005, seed: int = 0,
                      max_epochs: Optional[int] = None) -> RhoEstimate:
    """beta times the expected discount at the randomized stopping time of
    the barrier strategy (see run_randomized_stop).  With x0 omitted the path
    starts on the barrier with an immediate flag draw; otherwise it starts at
    x0 and flags begin at the first epoch on or above the barrier."""
    if max_epochs is None:
        max_epochs = default_horizon(spec, clock)
    res = run_randomized_stop(spec, clock, barrier, p,
                              x0 if x0 is not None else 0.0, y0,
                              n_paths, dt, seed=seed,
                              start_in_regime=x0 is None,
                              max_epochs=max_epochs)
    return _summ(res.contributions, res.truncated, max_epochs)


def density_crosscheck(spec: ModelSpec, clock: DividendClock,
                       barrier: np.ndarray, p: np.ndarray, y0: int,
                       x0: float, h: float = 0.05, n_paths: int = 50000,
                       dt: float = 0.005, seed: int = 0,
                       horizon_epochs: Optional[int] = None) -> dict:
    """Compare the marginal value of capital along the barrier strategy with
    the randomized-stop functional, using coupled seeds for the finite
    difference.  Returns the centred difference quotient, the functional
    estimate, and their standard errors."""
    from .strategy import estimate_npv, simulate_mmpcb

    if horizon_epochs is None:
        horizon_epochs = default_horizon(spec, clock)
    lo = simulate_mmpcb(spec, clock, barrier, x0 - h, y0, n_paths, dt,
                        seed=seed, horizon_epochs=horizon_epochs)
    hi = simulate_mmpcb(spec, clock, barrier, x0 + h, y0, n_paths, dt,
                        seed=seed, horizon_epochs=horizon_epochs)
    diff = (hi.npv(spec.beta) - lo.npv(spec.beta)) / (2.0 * h)
    fd = float(diff.mean())
    fd_se = float(np.std(diff, ddof=1) / np.sqrt(n_paths))
    rho_p = estimate_varrho_p(spec, clock, barrier, p, y0, x0=x0,
                              n_paths=n_paths, dt=dt, seed=seed + 101,
                              max_epochs=horizon_epochs)
    return {"finite_difference": fd, "fd_se": fd_se,
            "rho_p": rho_p.value, "rho_p_se": rho_p.se,
            "gap": fd - rho_p.value}
