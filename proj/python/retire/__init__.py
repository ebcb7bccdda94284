"""Lifecycle consumption, investment and retirement solver."""

from ._core import (
    Config,
    ConsumptionSplit,
    EnvelopeData,
    IncomeLaborSpec,
    MarketEnvironment,
    SolverError,
    UtilitySpec,
    ValidationError,
    ValueTriple,
    dual_h,
    dual_h_neg_derivative,
    envelope_breakpoints,
    hatV,
    income_labor,
    run,
    simulate_summary,
    solve_boundary,
    split_from_dual,
    total_utility,
)

__all__ = [
    "Config",
    "ConsumptionSplit",
    "EnvelopeData",
    "IncomeLaborSpec",
    "MarketEnvironment",
    "SolverError",
    "UtilitySpec",
    "ValidationError",
    "ValueTriple",
    "dual_h",
    "dual_h_neg_derivative",
    "envelope_breakpoints",
    "hatV",
    "income_labor",
    "run",
    "simulate_summary",
    "solve_boundary",
    "split_from_dual",
    "total_utility",
]
