import itertools
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from convexflows.edges import (
    FisherBasketEdge,
    GeometricMeanPool,
    InvalidEdgeError,
    TwoAssetGeometricPool,
    UnboundedEdgeError,
    fisher_linear_arbitrage,
    separable_cfmm_arbitrage,
    uniswap_arbitrage,
)


def _post_reserve_by_bisection(log_inv, weights, post_known, idx_known, idx_out):
    """Solve the invariant for one reserve by bisection on the log form."""
    target = log_inv - sum(w * math.log(r) for w, r in zip(
        [weights[j] for j in idx_known], post_known))
    w_out = weights[idx_out]
    lo, hi = 1e-12, 1e12
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if w_out * math.log(mid) < target:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


def uniswap_grid_oracle(reserves, fee, weight, prices, resolution=400, zooms=3):
    """Grid search over the tendered amount in each direction."""
    r1, r2 = reserves
    weights = [weight, 1.0 - weight]
    log_inv = weight * math.log(r1) + (1 - weight) * math.log(r2)

    def value_tender_1(delta):
        post2 = _post_reserve_by_bisection(log_inv, weights, [r1 + fee * delta], [0], 1)
        return -prices[0] * delta + prices[1] * (r2 - post2)

    def value_tender_2(delta):
        post1 = _post_reserve_by_bisection(log_inv, weights, [r2 + fee * delta], [1], 0)
        return -prices[1] * delta + prices[0] * (r1 - post1)

    best = 0.0
    for value_fn, cap in ((value_tender_1, 5 * r1), (value_tender_2, 5 * r2)):
        lo, hi = 0.0, cap
        for _ in range(zooms):
            grid = np.linspace(lo, hi, resolution)
            vals = [value_fn(d) for d in grid]
            k = int(np.argmax(vals))
            best = max(best, vals[k])
            lo = grid[max(0, k - 1)]
            hi = grid[min(len(grid) - 1, k + 1)]
    return best


def test_uniswap_textbook_trade():
    flow, value = uniswap_arbitrage([100.0, 100.0], 1.0, 0.5, [1.0, 4.0])
    assert_allclose(flow, [-100.0, 50.0], atol=1e-8)
    assert value == pytest.approx(100.0, abs=1e-8)


def test_uniswap_no_trade_inside_spread():
    flow, value = uniswap_arbitrage([100.0, 100.0], 0.99, 0.5, [1.0, 1.0])
    assert_allclose(flow, [0.0, 0.0])
    assert value == 0.0


def test_uniswap_zero_output_price():
    flow, value = uniswap_arbitrage([100.0, 100.0], 0.99, 0.5, [1.0, 0.0])
    assert_allclose(flow, [0.0, 0.0])
    assert value == 0.0


def test_uniswap_rejects_bad_pools():
    with pytest.raises(InvalidEdgeError):
        uniswap_arbitrage([0.0, 100.0], 1.0, 0.5, [1.0, 1.0])
    with pytest.raises(InvalidEdgeError):
        uniswap_arbitrage([100.0, 100.0], 1.5, 0.5, [1.0, 1.0])


@pytest.mark.parametrize("weight", [0.5, 0.8])
@pytest.mark.parametrize("fee", [1.0, 0.997])
def test_uniswap_matches_grid_oracle(weight, fee):
    rng = np.random.default_rng(19)
    for _ in range(8):
        reserves = rng.uniform(80.0, 220.0, size=2)
        prices = rng.uniform(0.3, 3.0, size=2)
        _, value = uniswap_arbitrage(reserves, fee, weight, prices)
        ref = uniswap_grid_oracle(reserves, fee, weight, prices)
        assert value == pytest.approx(ref, rel=1e-6, abs=1e-6)


def test_uniswap_invariant_preserved():
    rng = np.random.default_rng(4)
    for fee in (1.0, 0.99):
        pool = TwoAssetGeometricPool([120.0, 90.0], 0.5, fee)
        log_pre = 0.5 * math.log(120.0) + 0.5 * math.log(90.0)
        for _ in range(30):
            res = pool.evaluate(rng.uniform(0.2, 4.0, size=2))
            post = pool.reserves + fee * np.maximum(-res.flow, 0) - np.maximum(res.flow, 0)
            log_post = float(0.5 * np.log(post).sum())
            assert log_post >= log_pre - 1e-10
            assert pool.is_member(res.flow, 1e-8)


def test_three_asset_balanced_pool_no_trade():
    flow, value = separable_cfmm_arbitrage(
        [1 / 3, 1 / 3, 1 / 3], [100.0, 100.0, 100.0], 1.0, [1.0, 1.0, 1.0]
    )
    assert_allclose(flow, np.zeros(3))
    assert value == 0.0


def test_three_asset_skewed_prices():
    weights = [1 / 3, 1 / 3, 1 / 3]
    reserves = [100.0, 100.0, 100.0]
    prices = np.array([1.0, 1.0, 8.0])
    flow, value = separable_cfmm_arbitrage(weights, reserves, 1.0, prices)
    assert value > 0.0
    assert flow[0] < 0 and flow[1] < 0 and flow[2] > 0
    post = np.asarray(reserves) + np.maximum(-flow, 0) - np.maximum(flow, 0)
    log_pre = float(np.dot(weights, np.log(reserves)))
    log_post = float(np.dot(weights, np.log(post)))
    assert abs(log_post - log_pre) <= 1e-8 * abs(log_pre)

    # Independent grid over the two tendered legs, third from the invariant.
    best = -math.inf
    for d1, d2 in itertools.product(np.linspace(0.0, 300.0, 251), repeat=2):
        post3 = math.exp(
            (log_pre - np.dot(weights[:2], np.log([100.0 + d1, 100.0 + d2]))) / weights[2]
        )
        received = 100.0 - post3
        best = max(best, -d1 - d2 + 8.0 * received)
    assert value >= best - 1e-9
    assert value == pytest.approx(best, abs=2.0)  # grid resolution bound


def test_two_asset_geometric_mean_matches_uniswap_paths():
    rng = np.random.default_rng(8)
    for fee in (1.0, 0.997):
        for _ in range(25):
            reserves = rng.uniform(50.0, 250.0, size=2)
            prices = rng.uniform(0.2, 4.0, size=2)
            flow_a, value_a = uniswap_arbitrage(reserves, fee, 0.5, prices)
            flow_b, value_b = separable_cfmm_arbitrage([0.5, 0.5], reserves, fee, prices)
            assert value_a == pytest.approx(value_b, rel=1e-8, abs=1e-8)
            assert_allclose(flow_a, flow_b, rtol=1e-6, atol=1e-6)


def test_geometric_pool_degenerate_prices():
    pool = GeometricMeanPool([100.0, 100.0, 100.0], [1 / 3, 1 / 3, 1 / 3], 1.0)
    res = pool.evaluate(np.zeros(3))
    assert res.value == 0.0
    with pytest.raises(UnboundedEdgeError):
        pool.evaluate(np.array([1.0, 1.0, 0.0]))


def test_pool_support_properties():
    rng = np.random.default_rng(3)
    pools = [
        TwoAssetGeometricPool([150.0, 70.0], 0.5, 0.99),
        TwoAssetGeometricPool([100.0, 100.0], 0.8, 1.0),
        GeometricMeanPool([100.0, 140.0, 180.0], [0.2, 0.3, 0.5], 0.995),
    ]
    for pool in pools:
        dim = pool.dim
        for _ in range(25):
            p = rng.uniform(0.1, 3.0, size=dim)
            t = rng.uniform(0.2, 4.0)
            base = pool.evaluate(p)
            assert base.value == pytest.approx(float(p @ base.flow), abs=1e-8)
            assert pool.is_member(base.flow, 1e-7)
            scaled = pool.evaluate(t * p)
            assert scaled.value == pytest.approx(t * base.value, rel=1e-8, abs=1e-8)
            q = rng.uniform(0.1, 3.0, size=dim)
            theta = rng.uniform()
            mix = pool.evaluate(theta * p + (1 - theta) * q).value
            split = theta * base.value + (1 - theta) * pool.evaluate(q).value
            assert mix <= split + 1e-8 * (1.0 + abs(split))


def test_pool_membership_rejects_value_extraction():
    pool = TwoAssetGeometricPool([100.0, 100.0], 0.5, 1.0)
    assert not pool.is_member(np.array([10.0, 10.0]), 1e-6)
    assert not pool.is_member(np.array([-10.0, 120.0]), 1e-6)
    assert pool.is_member(np.array([-10.0, 5.0]), 1e-6)


# -- buyer basket edges ------------------------------------------------------


def fisher_corner_oracle(valuations, prices):
    """Enumerate the box corners; linear objectives attain one of them."""
    n_g = len(valuations)
    best = 0.0
    for corner in itertools.product([0.0, -1.0], repeat=n_g):
        goods = np.array(corner)
        utility = float(valuations @ (-goods))
        best = max(best, float(prices[:-1] @ goods) + prices[-1] * utility)
    return best


def test_fisher_arbitrage_examples():
    flow, value = fisher_linear_arbitrage([2.0, 1.0], [1.0, 1.0, 1.0])
    assert_allclose(flow, [-1.0, 0.0, 2.0])
    assert value == pytest.approx(1.0)

    flow, value = fisher_linear_arbitrage([2.0, 1.0], [1.0, 1.0, 0.0])
    assert_allclose(flow, np.zeros(3))
    assert value == 0.0

    flow, value = fisher_linear_arbitrage([0.0, 0.0], [1.0, 1.0, 1.0])
    assert_allclose(flow, np.zeros(3))
    assert value == 0.0


def test_fisher_arbitrage_matches_corner_oracle():
    rng = np.random.default_rng(44)
    for _ in range(60):
        n_g = int(rng.integers(1, 5))
        valuations = rng.uniform(0.0, 3.0, size=n_g)
        prices = rng.uniform(0.0, 2.0, size=n_g + 1)
        flow, value = fisher_linear_arbitrage(valuations, prices)
        assert value == pytest.approx(fisher_corner_oracle(valuations, prices), abs=1e-10)
        edge = FisherBasketEdge(valuations)
        assert edge.is_member(flow, 1e-9)
        assert value == pytest.approx(float(prices @ flow), abs=1e-10)


def test_fisher_tie_flagged_non_unique():
    edge = FisherBasketEdge([2.0, 1.0])
    res = edge.evaluate(np.array([1.0, 1.0, 1.0]))
    assert res.non_unique  # good 2 ties exactly
    res = edge.evaluate(np.array([1.0, 1.01, 1.0]))
    assert not res.non_unique
