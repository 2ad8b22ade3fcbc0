"""Numerical solver and Monte-Carlo simulator for optimal periodic dividends
with continuous capital injections under a regime-switching Levy surplus."""

from .model import (DividendClock, JumpLaw, ModelSpec, Regime,
                    ValidationReport, epoch_discount_factor, epoch_state_mass,
                    validate_model)
from .solver import (BarrierProfile, Grid, SolveResult, ValueGrid,
                     make_grid, value_iterate)

__version__ = "0.1.0"

__all__ = [
    "DividendClock", "JumpLaw", "ModelSpec", "Regime", "ValidationReport",
    "epoch_discount_factor", "epoch_state_mass", "validate_model",
    "BarrierProfile", "Grid", "SolveResult", "ValueGrid", "make_grid",
    "value_iterate", "__version__",
]
