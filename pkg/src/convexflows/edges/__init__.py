"""Allowable-flow sets exposed as price-query oracles."""

from .base import (
    ArbitrageResult,
    EdgeError,
    EdgeOracle,
    InvalidEdgeError,
    UnboundedEdgeError,
)
from .cfmm import (
    GeometricMeanPool,
    TwoAssetGeometricPool,
    separable_cfmm_arbitrage,
    uniswap_arbitrage,
)
from .market import FisherBasketEdge, fisher_linear_arbitrage
from .two_node import (
    BoundedEdgeData,
    CallableGain,
    GainFunction,
    IntervalDecision,
    LinearGain,
    PiecewiseLinearGain,
    PowerLossGain,
    ScalarArbitrage,
    TwoNodeEdge,
    active_interval_check,
    concave_gain_edge,
    linear_gain_edge,
    lossless_edge,
    no_flow_check,
    opf_arbitrage,
    opf_line_edge,
    opf_loss,
    piecewise_linear_edge,
    solve_scalar_arbitrage,
)

__all__ = [
    "ArbitrageResult",
    "EdgeError",
    "EdgeOracle",
    "InvalidEdgeError",
    "UnboundedEdgeError",
    "BoundedEdgeData",
    "CallableGain",
    "GainFunction",
    "IntervalDecision",
    "LinearGain",
    "PiecewiseLinearGain",
    "PowerLossGain",
    "ScalarArbitrage",
    "TwoNodeEdge",
    "active_interval_check",
    "concave_gain_edge",
    "linear_gain_edge",
    "lossless_edge",
    "no_flow_check",
    "opf_arbitrage",
    "opf_line_edge",
    "opf_loss",
    "piecewise_linear_edge",
    "solve_scalar_arbitrage",
    "GeometricMeanPool",
    "TwoAssetGeometricPool",
    "separable_cfmm_arbitrage",
    "uniswap_arbitrage",
    "FisherBasketEdge",
    "fisher_linear_arbitrage",
]
