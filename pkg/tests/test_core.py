import numpy as np
import pytest
from numpy.testing import assert_allclose

from convexflows import (
    EdgeIncidence,
    Hyperedge,
    LinearNonnegObjective,
    OpfQuadraticObjective,
    PrimalPoint,
    ProblemInstance,
    assemble_net_flow,
    check_feasibility,
    lossless_edge,
    opf_line_edge,
    primal_objective,
    scatter_prices,
)
from convexflows.core import DimensionError


def test_single_edge_identity_scatter():
    y = assemble_net_flow([np.array([-1.0, 1.0])], [EdgeIncidence((0, 1))], 2)
    assert_allclose(y, [-1.0, 1.0])


def test_interior_node_nets_to_zero():
    flows = [np.array([-1.0, 1.0]), np.array([-1.0, 1.0])]
    incs = [EdgeIncidence((0, 1)), EdgeIncidence((1, 2))]
    assert_allclose(assemble_net_flow(flows, incs, 3), [-1.0, 0.0, 1.0])


def test_conserving_edges_give_zero_total():
    # Edges with 1^T x = 0 must produce 1^T y = 0 exactly.
    rng = np.random.default_rng(7)
    incs = [EdgeIncidence(tuple(rng.choice(6, size=2, replace=False))) for _ in range(20)]
    flows = []
    for _ in incs:
        w = rng.normal()
        flows.append(np.array([-w, w]))
    y = assemble_net_flow(flows, incs, 6)
    assert float(np.sum(y)) == pytest.approx(0.0, abs=1e-12)


def test_scatter_linearity():
    rng = np.random.default_rng(3)
    incs = [EdgeIncidence(tuple(rng.choice(5, size=3, replace=False))) for _ in range(4)]
    xs = [rng.normal(size=3) for _ in incs]
    zs = [rng.normal(size=3) for _ in incs]
    a, b = 1.7, -0.4
    lhs = assemble_net_flow([a * x + b * z for x, z in zip(xs, zs)], incs, 5)
    rhs = a * assemble_net_flow(xs, incs, 5) + b * assemble_net_flow(zs, incs, 5)
    assert_allclose(lhs, rhs, atol=1e-12)


def test_assemble_dimension_mismatch():
    with pytest.raises(DimensionError):
        assemble_net_flow([np.array([1.0, -1.0, 0.0])], [EdgeIncidence((0, 1))], 2)


def test_incidence_rejects_duplicates_and_small():
    with pytest.raises(ValueError):
        EdgeIncidence((1, 1))
    with pytest.raises(ValueError):
        EdgeIncidence((2,))


def test_scatter_prices_selection():
    assert_allclose(scatter_prices(np.array([1.0, 2.0, 3.0]), EdgeIncidence((2, 0))), [3.0, 1.0])
    assert_allclose(scatter_prices(np.zeros(3), EdgeIncidence((1, 2))), [0.0, 0.0])
    assert_allclose(scatter_prices(np.array([5.0, 5.0, 5.0]), EdgeIncidence((0, 2))), [5.0, 5.0])


def test_scatter_prices_out_of_range():
    with pytest.raises(DimensionError):
        scatter_prices(np.array([1.0, 2.0]), EdgeIncidence((0, 3)))


def _linear_instance():
    edges = [Hyperedge(EdgeIncidence((0, 1)), lossless_edge(1.0))]
    return ProblemInstance(n=2, edges=edges, net_objective=LinearNonnegObjective([1.0, 2.0]))


def test_primal_objective_linear():
    instance = _linear_instance()
    point = PrimalPoint([np.array([-1.0, 1.0])], np.array([1.0, 1.0]))
    assert primal_objective(instance, point) == pytest.approx(3.0)


def test_primal_objective_indicator_violation():
    instance = _linear_instance()
    point = PrimalPoint([np.array([0.0, 0.0])], np.array([-0.1, 1.0]))
    assert primal_objective(instance, point) == -np.inf


def test_primal_objective_opf_quadratic():
    # Two unit demands served by nothing cost 1/2 each.
    edges = [Hyperedge(EdgeIncidence((0, 1)), opf_line_edge(16.0, 0.25, 1.0))]
    instance = ProblemInstance(n=2, edges=edges, net_objective=OpfQuadraticObjective([1.0, 1.0]))
    point = PrimalPoint([np.zeros(2)], np.zeros(2))
    assert primal_objective(instance, point) == pytest.approx(-1.0)


def test_primal_objective_monotone_in_net_flow():
    rng = np.random.default_rng(11)
    instance = _linear_instance()
    for _ in range(25):
        y = np.abs(rng.normal(size=2))
        delta = np.abs(rng.normal(size=2))
        p0 = primal_objective(instance, PrimalPoint([np.zeros(2)], y))
        p1 = primal_objective(instance, PrimalPoint([np.zeros(2)], y + delta))
        assert p1 >= p0 - 1e-12


def test_check_feasibility_consistent_point():
    instance = _linear_instance()
    flows = [np.array([-0.5, 0.5])]
    y = assemble_net_flow(flows, instance.incidences, 2)
    report = check_feasibility(instance, PrimalPoint(flows, y), tol=1e-9)
    assert report.net_flow_residual == 0.0
    assert report.ok


def test_check_feasibility_perturbed_net_flow():
    instance = _linear_instance()
    flows = [np.array([-0.5, 0.5])]
    y = assemble_net_flow(flows, instance.incidences, 2)
    y[1] += 1e-3
    report = check_feasibility(instance, PrimalPoint(flows, y), tol=1e-9)
    assert report.net_flow_residual == pytest.approx(1e-3)


def test_check_feasibility_capacity_exceeded():
    instance = _linear_instance()
    flows = [np.array([-2.0, 2.0])]
    y = assemble_net_flow(flows, instance.incidences, 2)
    report = check_feasibility(instance, PrimalPoint(flows, y), tol=1e-9)
    assert report.edge_membership == [False]
    assert not report.ok
