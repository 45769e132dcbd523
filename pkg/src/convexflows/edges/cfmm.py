"""Constant function market maker edges.

A pool holds reserves ``R`` and accepts a trade ``z`` (positive entries
received from the pool, negative entries tendered to it) whenever the
trading function value at the post-trade reserves ``R + fee * tendered -
received`` does not drop below its pre-trade value.  All bundled pools
use weighted geometric mean trading functions, for which the price
subproblem has closed forms (two assets) or reduces to a scalar dual
solved by bisection (general separable case).
"""

from __future__ import annotations

import math

import numpy as np

from .base import (
    ArbitrageResult,
    EdgeOracle,
    InvalidEdgeError,
    UnattainedSupremumError,
    require_nonnegative_prices,
)

__all__ = [
    "TwoAssetGeometricPool",
    "GeometricMeanPool",
    "uniswap_arbitrage",
    "separable_cfmm_arbitrage",
]

_DUAL_BISECT_ITERS = 200


def _validate_pool(reserves: np.ndarray, fee: float) -> np.ndarray:
    reserves = np.asarray(reserves, dtype=float)
    if np.any(reserves <= 0.0):
        raise InvalidEdgeError(f"reserves must be positive, got {reserves}")
    if not (0.0 < fee <= 1.0):
        raise InvalidEdgeError(f"fee must lie in (0, 1], got {fee}")
    return reserves


def _membership(reserves, weights, fee, flow, tol) -> bool:
    """Scaled residual test for the invariant and the reserve signs."""
    flow = np.asarray(flow, dtype=float)
    scale = tol * (1.0 + float(np.max(np.abs(flow))))
    tendered = np.maximum(-flow, 0.0)
    received = np.maximum(flow, 0.0)
    post = reserves + fee * tendered - received
    sign_viol = max(0.0, -float(np.min(post))) / max(1.0, float(np.max(reserves)))
    post_clip = np.maximum(post, 0.0)
    log_pre = float(np.dot(weights, np.log(reserves)))
    with np.errstate(divide="ignore"):
        log_post = float(np.dot(weights, np.log(post_clip)))
    inv_viol = max(0.0, math.expm1(log_pre - log_post)) if math.isfinite(log_post) else math.inf
    return max(sign_viol, inv_viol) <= scale


class TwoAssetGeometricPool(EdgeOracle):
    """Two-asset pool with trading function ``R1^w * R2^(1-w)``.

    ``weight = 1/2`` is the classic product market; other weights give
    weighted swap markets.  The price subproblem is solved in closed
    form: the no-trade price band is the fee-scaled marginal price of
    the pool, and outside it the post-trade reserves follow from the
    stationarity of the traded amount.
    """

    dim = 2
    is_strictly_convex = True

    def __init__(self, reserves, weight: float = 0.5, fee: float = 1.0):
        self.reserves = _validate_pool(reserves, fee)
        if len(self.reserves) != 2:
            raise InvalidEdgeError("two-asset pool needs exactly two reserves")
        if not (0.0 < weight < 1.0):
            raise InvalidEdgeError(f"weight must lie in (0, 1), got {weight}")
        self.weight = float(weight)
        self.fee = float(fee)
        self.weights = np.array([self.weight, 1.0 - self.weight])
        self._log_inv = float(np.dot(self.weights, np.log(self.reserves)))
        self._price = (self.weight / self.reserves[0]) / (
            (1.0 - self.weight) / self.reserves[1]
        )

    def marginal_price(self) -> float:
        """Pool price of asset 1 in units of asset 2, before fees."""
        return self._price

    def evaluate(self, prices: np.ndarray) -> ArbitrageResult:
        value, f1, f2, non_unique = self.evaluate_pair(float(prices[0]), float(prices[1]))
        return ArbitrageResult(value=value, flow=np.array([f1, f2]), non_unique=non_unique)

    def evaluate_pair(self, p1: float, p2: float) -> tuple[float, float, float, bool]:
        """Allocation-free form of :meth:`evaluate` (scalars in and out)."""
        if p1 < 0.0 or p2 < 0.0:
            raise ValueError(f"prices must be nonnegative, got ({p1}, {p2})")
        if p1 == 0.0 or p2 == 0.0:
            raise UnattainedSupremumError(
                "supremum not attained: an asset with zero price can be tendered without limit"
            )
        price = self._price
        ratio = p1 / p2
        if self.fee * price <= ratio <= price / self.fee:
            return 0.0, 0.0, 0.0, False
        if ratio < self.fee * price:
            tendered, received = self._trade(0, 1, p1, p2)
            f1, f2 = -tendered, received
        else:
            tendered, received = self._trade(1, 0, p2, p1)
            f1, f2 = received, -tendered
        return p1 * f1 + p2 * f2, f1, f2, False

    def _trade(self, j_in: int, j_out: int, p_in: float, p_out: float) -> tuple[float, float]:
        """Tender asset ``j_in`` for asset ``j_out`` at the stationary point."""
        gamma = self.fee
        w_in = self.weights[j_in]
        w_out = self.weights[j_out]
        r_in, r_out = self.reserves[j_in], self.reserves[j_out]
        ratio = w_in / w_out
        # Stationarity: p_out * d(received)/d(tendered) = p_in, which puts
        # the post-trade input reserve at a weighted geometric mean.
        log_post_in = (
            math.log(gamma * ratio * r_out * p_out / p_in) + ratio * math.log(r_in)
        ) / (ratio + 1.0)
        post_in = math.exp(log_post_in)
        tendered = (post_in - r_in) / gamma
        post_out = math.exp((self._log_inv - w_in * log_post_in) / w_out)
        return tendered, r_out - post_out

    def is_member(self, flow: np.ndarray, tol: float) -> bool:
        return _membership(self.reserves, self.weights, self.fee, flow, tol)


class GeometricMeanPool(EdgeOracle):
    """Weighted geometric mean pool over any number of assets.

    The log transform makes the trading function separable, so the price
    subproblem's scalar dual is solved by bisection on the invariant
    residual; the per-asset inner problems have closed forms.
    """

    is_strictly_convex = True

    def __init__(self, reserves, weights, fee: float = 1.0):
        self.reserves = _validate_pool(reserves, fee)
        weights = np.asarray(weights, dtype=float)
        if len(weights) != len(self.reserves) or len(weights) < 2:
            raise InvalidEdgeError("need one positive weight per asset")
        if np.any(weights <= 0) or abs(float(np.sum(weights)) - 1.0) > 1e-9:
            raise InvalidEdgeError("weights must be positive and sum to one")
        self.weights = weights
        self.fee = float(fee)
        self.dim = len(self.reserves)
        self._log_inv = float(np.dot(self.weights, np.log(self.reserves)))
        self._r = [float(v) for v in self.reserves]
        self._w = [float(v) for v in self.weights]

    def marginal_prices(self) -> np.ndarray:
        """Unnormalized marginal price vector of the pool at its reserves."""
        return self.weights / self.reserves

    def _post_reserve(self, lam: float, price: float, j: int) -> float:
        base = lam * self._w[j] / price
        r = self._r[j]
        if base < r:
            return base          # receive side
        scaled = self.fee * base
        return scaled if scaled > r else r  # tender side or idle band

    def evaluate(self, prices: np.ndarray) -> ArbitrageResult:
        prices = require_nonnegative_prices(prices)
        if np.all(prices == 0.0):
            return ArbitrageResult(value=0.0, flow=np.zeros(self.dim))
        if np.any(prices == 0.0):
            raise UnattainedSupremumError(
                "supremum not attained: an asset with zero price can be tendered without limit"
            )
        # No-trade test: a single multiplier can scale the pool's marginal
        # prices into the fee band around the quoted prices.
        p = [float(v) for v in prices]
        s = [p[j] * self._r[j] / self._w[j] for j in range(self.dim)]
        if self.fee * max(s) <= min(s):
            return ArbitrageResult(value=0.0, flow=np.zeros(self.dim))

        lo, hi = min(s), max(s) / self.fee
        w, log_inv = self._w, self._log_inv

        def residual(lam: float) -> tuple[float, float]:
            resid = -log_inv
            active = 0.0
            for j in range(self.dim):
                post = self._post_reserve(lam, p[j], j)
                resid += w[j] * math.log(post)
                if post != self._r[j]:
                    active += w[j]
            return resid, active

        # Bisect to the right active pattern, then Newton steps on the
        # log residual (linear in log(lam) per pattern) to full precision.
        for _ in range(_DUAL_BISECT_ITERS):
            lam = 0.5 * (lo + hi)
            resid, _ = residual(lam)
            if resid < 0.0:
                lo = lam
            else:
                hi = lam
            if hi - lo <= 1e-9 * hi:
                break
        lam = 0.5 * (lo + hi)
        for _ in range(4):
            resid, active = residual(lam)
            if active <= 0.0 or resid == 0.0:
                break
            lam = min(max(lam * math.exp(-resid / active), lo), hi)

        flow = np.zeros(self.dim)
        for j in range(self.dim):
            post = self._post_reserve(lam, p[j], j)
            if post >= self._r[j]:
                flow[j] = -(post - self._r[j]) / self.fee  # tendered
            else:
                flow[j] = self._r[j] - post                # received
        return ArbitrageResult(value=float(prices @ flow), flow=flow)

    def is_member(self, flow: np.ndarray, tol: float) -> bool:
        return _membership(self.reserves, self.weights, self.fee, flow, tol)


def uniswap_arbitrage(reserves, fee: float, weight: float, prices) -> tuple[np.ndarray, float]:
    """Optimal trade against a two-asset weighted product pool.

    Args:
        reserves: Positive reserves of the two assets.
        fee: Fee parameter in ``(0, 1]`` (1 means no fee).
        weight: Trading function weight of asset 1.
        prices: Nonnegative external prices of the two assets.

    Returns:
        ``(flow, value)`` for the most valuable acceptable trade.  At a
        zero price the supremum is not attained; the op returns the
        no-trade convention.
    """
    pool = TwoAssetGeometricPool(reserves, weight=weight, fee=fee)
    try:
        res = pool.evaluate(np.asarray(prices, dtype=float))
    except UnattainedSupremumError:
        return np.zeros(2), 0.0
    return res.flow, res.value


def separable_cfmm_arbitrage(weights, reserves, fee: float, prices) -> tuple[np.ndarray, float]:
    """Optimal trade against a weighted geometric mean pool of any size."""
    pool = GeometricMeanPool(reserves, weights, fee=fee)
    res = pool.evaluate(np.asarray(prices, dtype=float))
    return res.flow, res.value
