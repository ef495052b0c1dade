"""Hedging and risk-indifference price bounds for claims in an incomplete Brownian market."""

from .bsde import (BsdeSolution, PriceQuadruple, SchemeError, price_quadruple,
                   restart_consistency, solve, solve_terminal)
from .kernels import BACKEND
from .lattice import BrownianLattice, Claim, terminal_assets, terminal_values
from .market import EmmSlice, MarketError, MarketModel, emm_slice, validate_model
from .penalty import DriverKind, Penalty, PenaltyError, eval_driver

__all__ = [
    "BACKEND", "BrownianLattice", "BsdeSolution", "Claim", "DriverKind", "EmmSlice",
    "MarketError", "MarketModel", "Penalty", "PenaltyError", "PriceQuadruple", "SchemeError",
    "emm_slice", "eval_driver", "price_quadruple", "restart_consistency", "solve",
    "solve_terminal", "terminal_assets", "terminal_values", "validate_model",
]
